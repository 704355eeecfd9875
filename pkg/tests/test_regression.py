import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from abstention.core import InvalidInputError, LabeledDataset
from abstention.hypothesis import Linear
from abstention.maximizers import regression_losses
from abstention.regression import (
    RegressionVersionSpace,
    build_version_space,
    regression_pipeline,
    vs_radius,
)
from abstention.shift import DiscreteDistribution, sample_iid


def philox(seed):
    return np.random.Generator(np.random.Philox(seed))


def ball_support(rng, m=12, d=2):
    s = rng.normal(size=(m, d))
    s /= np.linalg.norm(s, axis=1, keepdims=True)
    return s * rng.uniform(0.3, 1.0, size=(m, 1))


P_PLANE = DiscreteDistribution.uniform(ball_support(np.random.default_rng(0)))
TARGET = np.array([0.5, -0.3])


def test_radius_examples():
    assert abs(vs_radius(64, 3 / math.e**2) - 1.25) <= 1e-12
    assert vs_radius(10**8, 0.5) < 1e-3
    with pytest.raises(InvalidInputError):
        vs_radius(0, 0.1)
    with pytest.raises(InvalidInputError):
        vs_radius(10, 1.0)


@given(st.integers(1, 10**6), st.floats(1e-6, 0.99))
def test_radius_monotone(n, delta):
    assert vs_radius(n + 1, delta) < vs_radius(n, delta)
    assert vs_radius(n, delta / 2) > vs_radius(n, delta)


def test_noiseless_fit_recovers_target():
    X = sample_iid(P_PLANE, 200, philox(1))
    h, vs = build_version_space(LabeledDataset(X, X @ TARGET), 0.01)
    assert np.allclose(h.w, TARGET, atol=1e-8)
    assert vs.contains(Linear(TARGET)) and vs.contains(h)
    assert vs.radius == vs_radius(200, 0.01)


def test_version_space_membership_by_radius():
    X = sample_iid(P_PLANE, 50, philox(2))
    vs = RegressionVersionSpace(X, Linear(TARGET), 0.01)
    assert vs.contains(Linear(TARGET + [0.05, 0.0])) == (np.mean((X[:, 0] * 0.05) ** 2) <= 0.01)
    assert not vs.contains(Linear([-0.5, 0.3]))
    with pytest.raises(InvalidInputError):
        RegressionVersionSpace(X, Linear(TARGET), 0.0)


def test_version_space_worst_case_is_feasible():
    X = sample_iid(P_PLANE, 100, philox(3))
    vs = RegressionVersionSpace(X, Linear(TARGET), 0.02)
    g, value = vs.worst_case(sample_iid(P_PLANE, 30, philox(4)))
    assert vs.contains(g) and np.linalg.norm(g.w) <= 1 + 1e-9
    assert value > 0


def test_data_outside_the_ball_is_rejected():
    with pytest.raises(InvalidInputError):
        build_version_space(LabeledDataset([[2.0, 0.0]], [0.1]), 0.1)
    with pytest.raises(InvalidInputError):
        build_version_space(LabeledDataset([[0.5, 0.0]], [1.5]), 0.1)


@pytest.mark.parametrize("seed", range(4))
def test_noiseless_pipeline_is_sound(seed):
    rng = philox(seed)
    X, T = sample_iid(P_PLANE, 200, rng), sample_iid(P_PLANE, 200, rng)
    c = 0.3
    res = regression_pipeline(LabeledDataset(X, X @ TARGET), T, c)
    f = Linear(TARGET)
    realized = np.mean(c * res.a + (1 - res.a) * regression_losses(f, res.h, T))
    assert res.mma.diagnostics["oracle_failures"] == 0
    assert realized <= res.certified_bound + 1e-12
    # with h = f the only loss left is the price of abstaining
    assert abs(realized - c * res.a.mean()) <= 1e-9


def test_noisy_pipeline_is_sound_when_target_is_inside():
    rng = philox(11)
    hits = 0
    for _ in range(5):
        X, T = sample_iid(P_PLANE, 150, rng), sample_iid(P_PLANE, 150, rng)
        y = np.clip(X @ TARGET + rng.normal(scale=0.1, size=len(X)), -1, 1)
        res = regression_pipeline(LabeledDataset(X, y), T, 0.5)
        if res.version_space.contains(Linear(TARGET)):
            hits += 1
            realized = np.mean(0.5 * res.a + (1 - res.a) * regression_losses(Linear(TARGET), res.h, T))
            assert realized <= res.certified_bound + 1e-12
    assert hits == 5


def test_bound_shrinks_with_more_data():
    bounds = []
    for n in (100, 400, 1600):
        rng = philox(n)
        X, T = sample_iid(P_PLANE, n, rng), sample_iid(P_PLANE, n, rng)
        bounds.append(regression_pipeline(LabeledDataset(X, X @ TARGET), T, 0.5).certified_bound)
    assert bounds[0] > bounds[1] > bounds[2]


def test_blind_spot_is_abstained():
    # training mass on the first axis says nothing about the second
    t = np.linspace(0.2, 1.0, 5)
    P = DiscreteDistribution.uniform(np.r_[np.c_[t, 0 * t], np.c_[-t, 0 * t]])
    s = np.linspace(0.6, 1.0, 5)
    Q = DiscreteDistribution.uniform(np.r_[np.c_[0 * s, s], np.c_[0 * s, -s]])
    rng = philox(8)
    X, T = sample_iid(P, 200, rng), sample_iid(Q, 100, rng)
    res = regression_pipeline(LabeledDataset(X, X @ [0.5, 0.0]), T, 0.1)
    assert res.a.mean() >= 0.9
    assert res.certified_bound <= 0.1 + 4 / 100 + 1e-9
