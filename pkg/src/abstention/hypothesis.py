"""Hypothesis classes and their exact (weighted) ERM oracles.

Three families are supported: explicit finite classes given as a prediction
table over a finite domain, one-dimensional thresholds, and linear functionals
in the unit ball.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .cdt import trust_region_solve
from .core import (
    ZERO_ONE,
    CapacityError,
    InvalidInputError,
    LabeledDataset,
    as_points,
    point_loss,
)

LE_ZERO = "le_zero"  # x <= cut predicts 0
LE_ONE = "le_one"  # x <= cut predicts 1

MAX_VC_DOMAIN = 24


class FiniteClass:
    """A finite hypothesis class given by its prediction table.

    ``table[j, k]`` is the label hypothesis ``j`` assigns to ``domain[k]``.
    """

    def __init__(self, domain, table):
        self.domain = as_points(domain)
        table = np.asarray(table)
        if table.ndim != 2 or table.shape[1] != len(self.domain):
            raise InvalidInputError(
                f"table shape {table.shape} does not match a domain of {len(self.domain)} points"
            )
        if not np.all(np.isin(table, (0, 1))):
            raise InvalidInputError("finite class tables must hold 0/1 predictions")
        table = table.astype(np.int8)
        if len(np.unique(table, axis=0)) != len(table):
            raise InvalidInputError("finite class has duplicate rows")
        if len({tuple(p) for p in self.domain}) != len(self.domain):
            raise InvalidInputError("finite class domain has duplicate points")
        table.setflags(write=False)
        self.table = table
        self._lookup = {tuple(p): k for k, p in enumerate(self.domain)}

    def __len__(self) -> int:
        return len(self.table)

    def __repr__(self) -> str:
        return f"FiniteClass(size={len(self)}, domain={len(self.domain)})"

    def member(self, index: int) -> "FiniteMember":
        if not 0 <= index < len(self):
            raise InvalidInputError(f"index {index} out of range for class of size {len(self)}")
        return FiniteMember(self, int(index))

    def domain_index(self, points) -> np.ndarray:
        """Column of ``table`` for each point; points must belong to the domain."""
        try:
            return np.array([self._lookup[tuple(p)] for p in as_points(points)], dtype=int)
        except KeyError as err:
            raise InvalidInputError(f"point {err.args[0]} is not in the class domain") from None

    def weighted_losses(self, data: LabeledDataset) -> np.ndarray:
        """Weighted zero-one training loss of every member."""
        if len(data) == 0:
            return np.zeros(len(self))
        cols = self.domain_index(data.points)
        mistakes = self.table[:, cols] != data.labels[None, :]
        return mistakes @ data.weights

    def consistent(self, data: LabeledDataset) -> np.ndarray:
        """Indices of members that label every training point correctly."""
        if len(data) == 0:
            return np.arange(len(self))
        cols = self.domain_index(data.points)
        return np.flatnonzero(np.all(self.table[:, cols] == data.labels[None, :], axis=1))

    def to_json(self) -> dict:
        return {"domain": self.domain.tolist(), "table": self.table.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "FiniteClass":
        try:
            return cls(doc["domain"], doc["table"])
        except KeyError as err:
            raise InvalidInputError(f"finite class document is missing {err.args[0]!r}") from None

    @classmethod
    def load(cls, path) -> "FiniteClass":
        with open(Path(path)) as fh:
            return cls.from_json(json.load(fh))

    @classmethod
    def thresholds_on(cls, grid) -> "FiniteClass":
        """All distinct threshold labelings of a sorted 1-d grid, as a finite class."""
        grid = np.sort(np.asarray(grid, dtype=float).reshape(-1))
        m = len(grid)
        rows = {}
        for k in range(m + 1):
            up = np.r_[np.zeros(k, np.int8), np.ones(m - k, np.int8)]
            rows.setdefault(up.tobytes(), up)
            rows.setdefault((1 - up).tobytes(), 1 - up)
        return cls(grid, np.array(list(rows.values())))


@dataclass(frozen=True, eq=False)
class FiniteMember:
    cls: FiniteClass
    index: int

    def predict(self, points) -> np.ndarray:
        return self.cls.table[self.index, self.cls.domain_index(points)].astype(float)

    def __eq__(self, other):
        return isinstance(other, FiniteMember) and other.cls is self.cls and other.index == self.index

    def __hash__(self):
        return hash((id(self.cls), self.index))


@dataclass(frozen=True)
class Threshold:
    cut: float
    orientation: str = LE_ZERO

    def __post_init__(self):
        if self.orientation not in (LE_ZERO, LE_ONE):
            raise InvalidInputError(f"unknown threshold orientation {self.orientation!r}")

    def predict(self, points) -> np.ndarray:
        x = as_points(points)
        if x.shape[1] != 1:
            raise InvalidInputError("thresholds act on 1-d points")
        above = (x[:, 0] > self.cut).astype(float)
        return above if self.orientation == LE_ZERO else 1.0 - above


@dataclass(frozen=True, eq=False)
class Linear:
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if np.linalg.norm(w) > 1.0 + 1e-9:
            raise InvalidInputError(f"linear hypothesis has norm {np.linalg.norm(w):.6g} > 1")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def predict(self, points) -> np.ndarray:
        return as_points(points) @ self.w

    def __eq__(self, other):
        return isinstance(other, Linear) and np.array_equal(self.w, other.w)

    def __hash__(self):
        return hash(self.w.tobytes())


@dataclass(frozen=True)
class ThresholdFamily:
    """Thresholds on the real line.

    The default one-sided family (``x <= cut`` predicts 0) has VC dimension 1.
    With ``two_sided=True`` both orientations are allowed and the VC
    dimension is 2.
    """

    two_sided: bool = False

    @property
    def orientations(self) -> tuple:
        return (LE_ZERO, LE_ONE) if self.two_sided else (LE_ZERO,)

    def cut_candidates(self, x) -> np.ndarray:
        u = np.unique(np.asarray(x, dtype=float))
        if len(u) == 0:
            return np.array([0.0])
        return np.r_[u[0] - 1.0, 0.5 * (u[:-1] + u[1:]), u[-1] + 1.0]


@dataclass(frozen=True)
class LinearClass:
    """Linear functionals ``x -> w.x`` with ``||w|| <= 1``."""

    dim: int = field(default=1)


def _threshold_erm(data: LabeledDataset, two_sided: bool) -> Threshold:
    if data.dim != 1:
        raise InvalidInputError("thresholds act on 1-d points")
    x = data.points[:, 0]
    u, inverse = np.unique(x, return_inverse=True)
    w1 = np.bincount(inverse, weights=data.weights * (data.labels == 1), minlength=len(u))
    w0 = np.bincount(inverse, weights=data.weights * (data.labels == 0), minlength=len(u))
    # cut j puts the first j distinct values on the "<= cut" side
    left1 = np.r_[0.0, np.cumsum(w1)]
    left0 = np.r_[0.0, np.cumsum(w0)]
    loss_le_zero = left1 + (w0.sum() - left0)
    loss_le_one = left0 + (w1.sum() - left1)
    cuts = ThresholdFamily().cut_candidates(x)
    if not two_sided:
        return Threshold(float(cuts[int(np.argmin(loss_le_zero))]), LE_ZERO)
    # ties: smallest cut first, then LE_ZERO before LE_ONE
    both = np.column_stack([loss_le_zero, loss_le_one]).reshape(-1)
    k = int(np.argmin(both))
    return Threshold(float(cuts[k // 2]), (LE_ZERO, LE_ONE)[k % 2])


def erm_weighted(cls, data: LabeledDataset, kind: str = ZERO_ONE):
    """Deterministic minimizer of the weighted training loss.

    Finite classes break ties towards the smallest row index. Thresholds pick
    the leftmost optimal cut (midpoints between sorted distinct values, plus a
    sentinel on each side); two-sided families prefer ``le_zero`` at the same
    cut.
    """
    if kind != ZERO_ONE:
        raise InvalidInputError(f"erm_weighted supports zero-one loss only, got {kind!r}")
    if len(data) and not np.all(np.isin(data.labels, (0.0, 1.0))):
        raise InvalidInputError("zero-one ERM needs labels in {0, 1}")
    if isinstance(cls, FiniteClass):
        return cls.member(int(np.argmin(cls.weighted_losses(data))))
    if isinstance(cls, ThresholdFamily):
        if len(data) == 0:
            return Threshold(0.0, LE_ZERO)
        return _threshold_erm(data, cls.two_sided)
    raise InvalidInputError(f"no zero-one ERM oracle for {type(cls).__name__}")


def fit_ball_least_squares(data: LabeledDataset) -> Linear:
    """Weighted least squares over the unit ball ``||w|| <= 1``."""
    if len(data) == 0:
        raise InvalidInputError("least squares needs at least one example")
    X, y, wts = data.points, data.labels, data.weights
    gram = (X.T * wts) @ X
    w = trust_region_solve(gram, -2.0 * (X.T * wts) @ y)
    norm = np.linalg.norm(w)
    if norm > 1.0:
        w = w / norm
    return Linear(w)


def weighted_loss(g, data: LabeledDataset, kind: str = ZERO_ONE) -> float:
    if len(data) == 0:
        return 0.0
    return float(point_loss(kind, data.labels, g.predict(data.points)) @ data.weights)


def version_space_membership(cls, train: LabeledDataset, g, radius: float = 0.0, h=None) -> bool:
    """Whether ``g`` belongs to the version space.

    Classification (finite or threshold classes): ``g`` must agree with every
    training label and ``radius`` must be 0. Regression (:class:`LinearClass`):
    ``g`` is a member when its mean squared discrepancy to ``h`` on the training
    features is at most ``radius``.
    """
    if radius < 0:
        raise InvalidInputError("version-space radius must be nonnegative")
    if isinstance(cls, LinearClass):
        if h is None:
            raise InvalidInputError("regression membership needs the fitted predictor h")
        if len(train) == 0:
            return True
        diff = g.predict(train.points) - h.predict(train.points)
        return bool(np.mean(diff**2) <= radius + 1e-12)
    if radius != 0:
        raise InvalidInputError("classification version spaces have radius 0")
    if len(train) == 0:
        return True
    return bool(np.all(g.predict(train.points) == train.labels))


def vc_dimension(cls) -> int:
    """Exact VC dimension (level-wise shattering search for finite classes)."""
    if isinstance(cls, ThresholdFamily):
        return 2 if cls.two_sided else 1
    if isinstance(cls, LinearClass):
        return cls.dim
    if not isinstance(cls, FiniteClass):
        raise InvalidInputError(f"no VC dimension routine for {type(cls).__name__}")
    m = len(cls.domain)
    if m > MAX_VC_DOMAIN:
        raise CapacityError(
            f"shattering search over {m} points is too expensive; pass the VC dimension explicitly"
        )
    table = cls.table.astype(np.int64)

    def shattered(subset):
        k = len(subset)
        if len(table) < 2**k:
            return False
        codes = table[:, list(subset)] @ (1 << np.arange(k))
        return len(np.unique(codes)) == 2**k

    level = [(j,) for j in range(m) if shattered((j,))]
    dim = 1 if level else 0
    while level:
        known = set(level)
        nxt = []
        for a, b in combinations(level, 2):
            if a[:-1] != b[:-1]:
                continue
            cand = a + (b[-1],) if a[-1] < b[-1] else b + (a[-1],)
            if all(sub in known for sub in combinations(cand, len(cand) - 1)) and shattered(cand):
                nxt.append(cand)
        if nxt:
            dim = len(nxt[0])
        level = sorted(set(nxt))
    return dim
