"""Closed-form guarantees, PQ-style error rates and the abstainer that turns the
transductive reduction into a pointwise rule."""
from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from .core import InvalidInputError, LabeledDataset, as_points
from .mma import FLIP, mma
from .shift import DiscreteDistribution, align, best_k_bound


class BoundPair(NamedTuple):
    raw: float
    with_slack: float


class HighProbBound(NamedTuple):
    pre_mma: float
    post_mma: float


def classification_bound_expected(d: int, n: int) -> BoundPair:
    """2d lg(2n) / n, and 2d lg(3n) / n which also absorbs the +1/n of the reduction."""
    if d < 1 or n < 2:
        raise InvalidInputError("need d >= 1 and n >= 2")
    return BoundPair(2 * d * math.log2(2 * n) / n, 2 * d * math.log2(3 * n) / n)


def classification_bound_highprob(d: int, n: int, delta: float) -> HighProbBound:
    """(2d lg 2n + lg(1/(2 delta))) / n before the reduction, (2d lg 2n + lg(1/delta)) / n after."""
    if d < 1 or n < 2:
        raise InvalidInputError("need d >= 1 and n >= 2")
    if not 0.0 < delta < 1.0:
        raise InvalidInputError("delta must lie in (0, 1)")
    head = 2 * d * math.log2(2 * n)
    return HighProbBound((head + math.log2(1 / (2 * delta))) / n, (head + math.log2(1 / delta)) / n)


def generalization_bound(P: DiscreteDistribution, Q: DiscreteDistribution, c: float, d: int, n: int):
    """min over k >= 1 of c D_k(P||Q) + 2dk lg(3n) / n, as (k, value)."""
    return best_k_bound(P, Q, c, classification_bound_expected(d, n).with_slack)


def pq_metrics(Q: DiscreteDistribution, P: DiscreteDistribution, h, f, abstain_prob: Callable):
    """(eps1, eps2): non-abstained Q-error of h and P-mass of abstention."""
    support, p, q = align(P, Q)
    alpha = np.asarray(abstain_prob(support), dtype=float).reshape(-1)
    if np.any(alpha < 0) or np.any(alpha > 1):
        raise InvalidInputError("abstention probabilities must lie in [0, 1]")
    wrong = h.predict(support) != f.predict(support)
    return float(np.sum(q * (1.0 - alpha) * wrong)), float(np.sum(p * alpha))


def generalize_abstainer(train: LabeledDataset, test_rest, h, c: float, x_prime, cls=None,
                         maximizer: str = FLIP, rng=None, **mma_kwargs) -> float:
    """Abstention probability at ``x_prime``: run MMA with ``x_prime`` as the first test point.

    If ``rng`` is given the remaining test points are shuffled first.
    """
    rest = as_points(test_rest)
    if rng is not None:
        rest = rest[rng.permutation(len(rest))]
    test = np.vstack([as_points(x_prime), rest])
    res = mma(train, test, h, c, maximizer, cls=cls, **mma_kwargs)
    return float(res.a[0])
