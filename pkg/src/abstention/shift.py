"""Finite distributions, divergences between them, the couplings used to
relate shifted test sets to natural ones, and a test-set adversary."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import InvalidInputError, as_points

PMF_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    support: np.ndarray
    pmf: np.ndarray

    def __post_init__(self):
        support = as_points(self.support)
        pmf = np.asarray(self.pmf, dtype=float).reshape(-1)
        if len(support) != len(pmf):
            raise InvalidInputError(f"{len(support)} support points but {len(pmf)} probabilities")
        if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
            raise InvalidInputError("probabilities must be finite and nonnegative")
        if abs(pmf.sum() - 1.0) > PMF_TOL:
            raise InvalidInputError(f"probabilities sum to {pmf.sum():.15g}, not 1")
        if len({tuple(p) for p in support}) != len(support):
            raise InvalidInputError("support points must be distinct")
        for name, value in (("support", support), ("pmf", pmf)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def prob_of(self, points) -> np.ndarray:
        lookup = {tuple(p): q for p, q in zip(self.support, self.pmf)}
        return np.array([lookup.get(tuple(p), 0.0) for p in as_points(points)])

    def to_json(self) -> dict:
        return {"support": self.support.tolist(), "pmf": self.pmf.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "DiscreteDistribution":
        try:
            return cls(doc["support"], doc["pmf"])
        except KeyError as err:
            raise InvalidInputError(f"distribution document is missing {err.args[0]!r}") from None

    @classmethod
    def load(cls, path) -> "DiscreteDistribution":
        with open(Path(path)) as fh:
            return cls.from_json(json.load(fh))

    @classmethod
    def uniform(cls, support) -> "DiscreteDistribution":
        support = as_points(support)
        return cls(support, np.full(len(support), 1.0 / len(support)))

    @classmethod
    def normalized(cls, support, weights) -> "DiscreteDistribution":
        w = np.asarray(weights, dtype=float)
        return cls(support, w / w.sum())


def align(P: DiscreteDistribution, Q: DiscreteDistribution):
    """Union support (P's points first) and both pmfs extended by zeros."""
    if P.dim != Q.dim:
        raise InvalidInputError("distributions live in different dimensions")
    index = {tuple(p): i for i, p in enumerate(P.support)}
    extra = [q for q in Q.support if tuple(q) not in index]
    support = np.vstack([P.support] + ([np.array(extra)] if extra else []))
    for q in extra:
        index[tuple(q)] = len(index)
    p = np.zeros(len(support))
    p[: len(P.pmf)] = P.pmf
    q = np.zeros(len(support))
    q[[index[tuple(x)] for x in Q.support]] = Q.pmf
    return support, p, q


def tv_distance(P: DiscreteDistribution, Q: DiscreteDistribution) -> float:
    _, p, q = align(P, Q)
    return float(0.5 * np.abs(p - q).sum())


def dk_divergence(P: DiscreteDistribution, Q: DiscreteDistribution, k: float) -> float:
    """sum_x max(Q(x) - k P(x), 0)."""
    if not k >= 1:
        raise InvalidInputError(f"k must be at least 1, got {k}")
    _, p, q = align(P, Q)
    return float(np.maximum(q - k * p, 0.0).sum())


def _ratios(p, q):
    live = p > 0
    r = q[live] / p[live]
    return np.unique(np.r_[1.0, r[r >= 1.0]])


def best_k_bound(P: DiscreteDistribution, Q: DiscreteDistribution, c: float, base_loss: float):
    """Minimize ``c D_k(P||Q) + k base_loss`` over k >= 1.

    The objective is piecewise linear in k with kinks only at the ratios
    Q(x)/P(x), so those (and k = 1) are the only candidates. Ties go to the
    smallest k.
    """
    if base_loss < 0:
        raise InvalidInputError("base loss must be nonnegative")
    _, p, q = align(P, Q)
    ks = _ratios(p, q)
    values = np.array([c * np.maximum(q - k * p, 0.0).sum() + k * base_loss for k in ks])
    j = int(np.argmin(values))
    return float(ks[j]), float(values[j])


def sample_indices(D: DiscreteDistribution, n: int, rng) -> np.ndarray:
    return rng.choice(len(D.pmf), size=n, p=D.pmf)


def sample_iid(D: DiscreteDistribution, n: int, rng) -> np.ndarray:
    """n independent draws, as an (n, d) point array."""
    return D.support[sample_indices(D, n, rng)]


@dataclass(frozen=True)
class CoupledSample:
    """A test draw ``x``, a natural draw ``z`` and per-index flags.

    Indices refer to ``support``. For the TV coupling ``flags`` marks modified
    indices; for the D_k coupling it marks abstentions.
    """

    support: np.ndarray
    x_index: np.ndarray
    z_index: np.ndarray
    flags: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.support[self.x_index]

    @property
    def z(self) -> np.ndarray:
        return self.support[self.z_index]


def tv_coupling(P: DiscreteDistribution, Q: DiscreteDistribution, n: int, rng) -> CoupledSample:
    """x ~ Q^n, z ~ P^n with z_i = x_i unless a coin with bias min(1, P/Q) fails."""
    support, p, q = align(P, Q)
    x = rng.choice(len(q), size=n, p=q)
    keep = rng.uniform(size=n) < np.minimum(1.0, p[x] / q[x])
    z = x.copy()
    surplus = np.maximum(p - q, 0.0)
    moved = np.flatnonzero(~keep)
    if len(moved):
        z[moved] = rng.choice(len(p), size=len(moved), p=surplus / surplus.sum())
    return CoupledSample(support, x, z, z != x)


def dk_parts(p, q, k: float):
    """Abstain probabilities, copy mass beta and fallback distribution mu of the D_k coupling."""
    if not k >= 1:
        raise InvalidInputError(f"k must be at least 1, got {k}")
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(q > 0, np.maximum(1.0 - k * p / q, 0.0), 0.0)
    dk = float(np.maximum(q - k * p, 0.0).sum())
    beta = 1.0 - (1.0 - dk) / k
    raw = np.maximum(0.0, p - q / k)
    raw[np.abs(raw) <= 1e-15] = 0.0
    mu = raw / raw.sum() if raw.sum() > 0 else np.zeros_like(raw)
    return alpha, beta, mu


def dk_coupling(P: DiscreteDistribution, Q: DiscreteDistribution, k: float, n: int, rng) -> CoupledSample:
    """x ~ Q^n; abstain on x_i w.p. max(1 - kP/Q, 0); otherwise copy z_i = x_i w.p. 1/k.

    Abstained and non-copied indices draw z_i from mu proportional to
    max(0, P - Q/k), which makes z ~ P^n.
    """
    support, p, q = align(P, Q)
    alpha, beta, mu = dk_parts(p, q, k)
    x = rng.choice(len(q), size=n, p=q)
    abstain = rng.uniform(size=n) < alpha[x]
    copy = (~abstain) & (rng.uniform(size=n) < 1.0 / k)
    z = x.copy()
    fresh = np.flatnonzero(~copy)
    if len(fresh):
        if beta <= 0:
            raise InvalidInputError("fallback distribution is empty but a non-copy draw was requested")
        z[fresh] = rng.choice(len(mu), size=len(fresh), p=mu)
    return CoupledSample(support, x, z, abstain)


@dataclass(frozen=True)
class Resample:
    """Replace chosen points by fresh draws from a distribution."""

    dist: DiscreteDistribution


@dataclass(frozen=True)
class Targeted:
    """Replace chosen points, in order, by the given list."""

    points: np.ndarray


def corrupt(z, gamma: float, policy, rng):
    """Replace floor(gamma n) uniformly chosen entries of z; return (x, modified indices)."""
    if not 0.0 <= gamma <= 1.0:
        raise InvalidInputError("gamma must lie in [0, 1]")
    z = as_points(z)
    n = len(z)
    budget = int(np.floor(gamma * n + 1e-12))
    chosen = np.sort(rng.choice(n, size=budget, replace=False)) if budget else np.zeros(0, dtype=int)
    if isinstance(policy, Resample):
        new = sample_iid(policy.dist, budget, rng)
    elif isinstance(policy, Targeted):
        pts = as_points(policy.points)
        if len(pts) < budget:
            raise InvalidInputError(f"{len(pts)} replacement points for {budget} corruptions")
        new = pts[:budget]
    else:
        raise InvalidInputError(f"unknown corruption policy {policy!r}")
    x = z.copy()
    if budget:
        x[chosen] = new
    modified = np.flatnonzero(np.any(x != z, axis=1))
    return x, modified
