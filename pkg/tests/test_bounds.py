import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from abstention.bounds import (
    classification_bound_expected,
    classification_bound_highprob,
    generalization_bound,
    generalize_abstainer,
    pq_metrics,
)
from abstention.core import InvalidInputError, LabeledDataset
from abstention.hypothesis import Threshold, ThresholdFamily, erm_weighted
from abstention.shift import DiscreteDistribution, best_k_bound, sample_indices


def test_expected_bound_examples():
    raw, slack = classification_bound_expected(1, 200)
    assert abs(slack - math.log2(600) / 100) <= 1e-15
    assert abs(raw - math.log2(400) / 100) <= 1e-15
    assert abs(slack - 0.0923) <= 1e-4
    assert classification_bound_expected(2, 200).with_slack == pytest.approx(2 * slack, rel=1e-15)
    with pytest.raises(InvalidInputError):
        classification_bound_expected(1, 1)


def test_high_probability_bound_examples():
    pre, post = classification_bound_highprob(1, 200, 0.05)
    assert abs(post - (2 * math.log2(400) + math.log2(20)) / 200) <= 1e-15
    assert abs(pre - (2 * math.log2(400) + math.log2(10)) / 200) <= 1e-15
    pre, _ = classification_bound_highprob(3, 50, 0.5)
    assert pre == classification_bound_expected(3, 50).raw
    with pytest.raises(InvalidInputError):
        classification_bound_highprob(1, 10, 0.0)


@given(st.integers(1, 20), st.integers(2, 10**5), st.floats(1e-9, 0.5))
def test_bound_monotonicity(d, n, delta):
    e = classification_bound_expected(d, n)
    assert classification_bound_expected(d, n + 1).with_slack < e.with_slack
    assert classification_bound_expected(d + 1, n).with_slack > e.with_slack
    assert e.raw < e.with_slack
    h = classification_bound_highprob(d, n, delta)
    assert h.pre_mma >= e.raw - 1e-15
    assert h.post_mma > h.pre_mma
    assert classification_bound_highprob(d, n, delta / 2).post_mma > h.post_mma


def test_generalization_bound_uses_slack_constant():
    P = DiscreteDistribution.uniform([[1], [2], [3], [4]])
    Q = DiscreteDistribution.uniform([[1], [2]])
    k, value = generalization_bound(P, Q, 0.9, 1, 2000)
    assert (k, value) == best_k_bound(P, Q, 0.9, classification_bound_expected(1, 2000).with_slack)
    assert k == 2.0


# pq metrics

GRID = np.linspace(0.05, 0.95, 10).reshape(-1, 1)
P_GRID = DiscreteDistribution.uniform(GRID)
Q_GRID = DiscreteDistribution.normalized(GRID, np.arange(1, 11))
H, F = Threshold(0.42), Threshold(0.62)


def test_pq_metric_examples():
    wrong = H.predict(GRID) != F.predict(GRID)
    eps1, eps2 = pq_metrics(Q_GRID, P_GRID, H, F, lambda x: np.zeros(len(x)))
    assert eps2 == 0 and abs(eps1 - Q_GRID.pmf[wrong].sum()) <= 1e-15
    eps1, eps2 = pq_metrics(Q_GRID, P_GRID, H, F, lambda x: np.ones(len(x)))
    assert eps1 == 0 and abs(eps2 - 1) <= 1e-12
    eps1, eps2 = pq_metrics(Q_GRID, P_GRID, H, F, lambda x: (H.predict(x) != F.predict(x)).astype(float))
    assert eps1 == 0 and abs(eps2 - P_GRID.pmf[wrong].sum()) <= 1e-15
    with pytest.raises(InvalidInputError):
        pq_metrics(Q_GRID, P_GRID, H, F, lambda x: np.full(len(x), 2.0))


def test_pq_metrics_match_monte_carlo():
    rng = np.random.Generator(np.random.Philox(3))
    alpha = rng.uniform(size=len(GRID))

    def abstain(x):
        return alpha[np.searchsorted(GRID[:, 0], x[:, 0])]

    eps1, eps2 = pq_metrics(Q_GRID, P_GRID, H, F, abstain)
    n = 200_000
    xq = GRID[sample_indices(Q_GRID, n, rng)]
    xp = GRID[sample_indices(P_GRID, n, rng)]
    err = (rng.uniform(size=n) >= abstain(xq)) & (H.predict(xq) != F.predict(xq))
    rej = rng.uniform(size=n) < abstain(xp)
    for exact, draws in ((eps1, err), (eps2, rej)):
        assert abs(draws.mean() - exact) <= 4 * math.sqrt(exact * (1 - exact) / n)


# transductive-to-pointwise abstainer


TRAIN = LabeledDataset([[0.1], [0.15], [0.2], [0.8], [0.85], [0.9]], [0, 0, 0, 1, 1, 1])


def test_abstainer_answers_on_training_support():
    fam = ThresholdFamily()
    h = erm_weighted(fam, TRAIN)
    rest = np.r_[TRAIN.points, TRAIN.points, [[0.5]]]
    a = generalize_abstainer(TRAIN, rest, h, 0.5, [[0.15]], cls=fam)
    assert a <= 0.1


def test_abstainer_abstains_in_ambiguous_band():
    fam = ThresholdFamily()
    h = erm_weighted(fam, TRAIN)
    rest = np.r_[np.full((29, 1), 0.5), TRAIN.points]
    a = generalize_abstainer(TRAIN, rest, h, 0.5, [[0.5]], cls=fam)
    assert a >= 0.9


def test_abstainer_is_deterministic_given_seed():
    fam = ThresholdFamily()
    h = erm_weighted(fam, TRAIN)
    rest = np.r_[np.linspace(0.3, 0.7, 9).reshape(-1, 1), TRAIN.points]
    runs = [generalize_abstainer(TRAIN, rest, h, 0.3, [[0.45]], cls=fam,
                                 rng=np.random.Generator(np.random.Philox(5))) for _ in range(2)]
    assert runs[0] == runs[1]
