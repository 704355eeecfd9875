import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from abstention.core import CapacityError, InvalidInputError, LabeledDataset
from abstention.hypothesis import (
    LE_ONE,
    LE_ZERO,
    FiniteClass,
    Linear,
    LinearClass,
    Threshold,
    ThresholdFamily,
    erm_weighted,
    fit_ball_least_squares,
    vc_dimension,
    version_space_membership,
    weighted_loss,
)
from abstention.selftest import random_finite_class


def test_finite_erm_realizable():
    cls = FiniteClass([0, 1, 2], [[0, 0, 0], [0, 1, 1], [1, 1, 0]])
    data = LabeledDataset([[0], [1], [2]], [0, 1, 1])
    g = erm_weighted(cls, data)
    assert g.index == 1
    assert weighted_loss(g, data) == 0


def test_finite_erm_tie_goes_to_smallest_index():
    cls = FiniteClass([0, 1], [[1, 0], [0, 1]])
    data = LabeledDataset([[0], [1]], [0, 0], [5, 5])
    assert erm_weighted(cls, data).index == 0


def test_threshold_erm_example():
    data = LabeledDataset([[0], [1], [2]], [0, 1, 1])
    t = erm_weighted(ThresholdFamily(), data)
    assert t == Threshold(0.5, LE_ZERO)
    assert weighted_loss(t, data) == 0


def test_threshold_erm_prefers_leftmost_cut():
    # every cut with le_one orientation errs once; ties resolve to the sentinel
    data = LabeledDataset([[0], [1]], [1, 1])
    assert erm_weighted(ThresholdFamily(), data) == Threshold(-1.0, LE_ZERO)


def test_erm_rejects_squared_kind():
    with pytest.raises(InvalidInputError):
        erm_weighted(ThresholdFamily(), LabeledDataset([[0]], [1]), "squared")
    with pytest.raises(InvalidInputError):
        erm_weighted(LinearClass(2), LabeledDataset([[0, 0]], [1]))


def test_finite_class_validation(tmp_path):
    with pytest.raises(InvalidInputError):
        FiniteClass([0, 1], [[0, 1], [0, 1]])
    with pytest.raises(InvalidInputError):
        FiniteClass([0, 1], [[0, 2]])
    cls = FiniteClass([0, 1], [[0, 1], [1, 1]])
    path = tmp_path / "cls.json"
    path.write_text(__import__("json").dumps(cls.to_json()))
    back = FiniteClass.load(path)
    assert np.array_equal(back.table, cls.table)
    with pytest.raises(InvalidInputError):
        cls.member(5)
    with pytest.raises(InvalidInputError):
        cls.domain_index([[7]])


def test_thresholds_on_grid_is_two_sided():
    grid = np.array([0.0, 1.0, 2.0, 3.0])
    cls = FiniteClass.thresholds_on(grid)
    assert len(cls) == 2 * len(grid)
    assert vc_dimension(cls) == 2 == vc_dimension(ThresholdFamily(two_sided=True))


def test_one_sided_family_never_flips_orientation():
    data = LabeledDataset([[0], [1], [2]], [1, 0, 0])
    assert erm_weighted(ThresholdFamily(), data).orientation == LE_ZERO
    assert erm_weighted(ThresholdFamily(two_sided=True), data) == Threshold(0.5, LE_ONE)


def test_fit_ball_interpolates():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(20, 3))
    X /= 2 * np.linalg.norm(X, axis=1, keepdims=True)
    w = np.array([0.3, -0.5, 0.2])
    h = fit_ball_least_squares(LabeledDataset(X, X @ w))
    assert np.allclose(h.w, w, atol=1e-8)


def test_fit_ball_projects_to_boundary():
    h = fit_ball_least_squares(LabeledDataset([[1.0], [1.0]], [2.0, 2.0]))
    assert h.w[0] == pytest.approx(1.0, abs=1e-9)


def test_fit_ball_zero_labels():
    h = fit_ball_least_squares(LabeledDataset([[0.5, 0.1], [0.2, -0.3]], [0.0, 0.0]))
    assert np.allclose(h.w, 0.0, atol=1e-12)


def test_membership_examples():
    train = LabeledDataset([[1.0]], [0.0])
    cls = LinearClass(1)
    h = Linear([0.0])
    assert version_space_membership(cls, train, Linear([0.5]), 0.25, h=h)
    assert not version_space_membership(cls, train, Linear([0.6]), 0.25, h=h)
    assert version_space_membership(cls, train, h, 0.0, h=h)
    data = LabeledDataset([[0], [1]], [0, 1])
    assert version_space_membership(ThresholdFamily(), data, Threshold(0.5))
    assert not version_space_membership(ThresholdFamily(), data, Threshold(1.5))
    with pytest.raises(InvalidInputError):
        version_space_membership(ThresholdFamily(), data, Threshold(0.5), -1.0)


def test_vc_examples():
    assert vc_dimension(ThresholdFamily()) == 1
    for m in range(1, 5):
        table = np.array(list(itertools.product([0, 1], repeat=m)))
        assert vc_dimension(FiniteClass(np.arange(m), table)) == m
    assert vc_dimension(FiniteClass([0, 1, 2], [[0, 1, 0]])) == 0
    with pytest.raises(CapacityError):
        vc_dimension(FiniteClass(np.arange(25), np.zeros((1, 25))))


def _vc_reference(cls):
    m = len(cls.domain)
    best = 0
    for k in range(1, m + 1):
        if any(len({tuple(r) for r in cls.table[:, list(s)]}) == 2**k for s in itertools.combinations(range(m), k)):
            best = k
    return best


@given(st.integers(0, 2**32 - 1))
def test_vc_matches_exhaustive(seed):
    rng = np.random.default_rng(seed)
    cls = random_finite_class(rng, domain_size=int(rng.integers(1, 7)), size=int(rng.integers(1, 40)))
    assert vc_dimension(cls) == _vc_reference(cls)


@given(st.integers(0, 2**32 - 1))
def test_erm_dominates_every_member(seed):
    rng = np.random.default_rng(seed)
    cls = random_finite_class(rng)
    k = int(rng.integers(1, 12))
    data = LabeledDataset(cls.domain[rng.integers(0, len(cls.domain), size=k)],
                          rng.integers(0, 2, size=k), rng.integers(0, 6, size=k))
    g = erm_weighted(cls, data)
    assert g == erm_weighted(cls, data)
    assert weighted_loss(g, data) == cls.weighted_losses(data).min()
    for fam in (ThresholdFamily(), ThresholdFamily(two_sided=True)):
        t = erm_weighted(fam, data)
        cuts = fam.cut_candidates(data.points[:, 0])
        assert weighted_loss(t, data) == min(weighted_loss(Threshold(u, o), data) for u in cuts for o in fam.orientations)


def _ball_data(rng, n, d, noise=0.3):
    X = rng.normal(size=(n, d))
    X *= rng.uniform(0, 1, size=(n, 1)) / np.linalg.norm(X, axis=1, keepdims=True)
    y = np.clip(X @ rng.normal(size=d) + noise * rng.normal(size=n), -1, 1)
    return LabeledDataset(X, y)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_least_squares_dominance_and_kkt(seed, d):
    rng = np.random.default_rng(seed)
    data = _ball_data(rng, int(rng.integers(1, 15)), d)
    h = fit_ball_least_squares(data)
    X, y = data.points, data.labels

    def obj(w):
        return np.sum((X @ w - y) ** 2)

    W = rng.normal(size=(1000, d))
    W *= rng.uniform(0, 1, size=(1000, 1)) ** (1 / d) / np.linalg.norm(W, axis=1, keepdims=True)
    assert obj(h.w) <= np.min(np.sum((W @ X.T - y) ** 2, axis=1)) + 1e-9
    grad = 2 * X.T @ (X @ h.w - y)
    norm = np.linalg.norm(h.w)
    assert norm <= 1 + 1e-9
    if norm < 1 - 1e-7:
        assert np.linalg.norm(grad) <= 1e-7
    else:
        # gradient points inwards along w: grad = -2 lam w with lam >= 0
        lam = -grad @ h.w / 2
        assert lam >= -1e-7
        assert np.linalg.norm(grad + 2 * lam * h.w) <= 1e-7


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_erm_discrepancy_bounded_by_excess_risk(seed, d):
    rng = np.random.default_rng(seed)
    data = _ball_data(rng, int(rng.integers(1, 30)), d)
    h = fit_ball_least_squares(data)
    X, y = data.points, data.labels
    f = rng.normal(size=d)
    f *= rng.uniform() / np.linalg.norm(f)
    disc = np.mean((X @ f - X @ h.w) ** 2)
    excess = np.mean((y - X @ f) ** 2) - np.mean((y - X @ h.w) ** 2)
    assert disc <= excess + 1e-7
