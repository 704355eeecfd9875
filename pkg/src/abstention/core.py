"""Shared data types and the loss functionals optimized everywhere else."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InvalidInputError(ValueError):
    """Raised when arguments violate an operation's preconditions."""


class InfeasibleError(RuntimeError):
    """Raised when a constraint set (e.g. a version space) is empty."""


class CapacityError(ValueError):
    """Raised when a brute-force routine is asked for more than it can enumerate."""


class NumericError(RuntimeError):
    """Raised when an iterative solver fails; carries diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


ZERO_ONE = "zero-one"
SQUARED = "squared"
LOSS_KINDS = (ZERO_ONE, SQUARED)


def as_points(points) -> np.ndarray:
    """Coerce a sequence of feature points to a float array of shape (n, d)."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise InvalidInputError(f"feature array must be 1-d or 2-d, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class LabeledDataset:
    """Feature points with labels and nonnegative per-example weights."""

    points: np.ndarray
    labels: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        points = as_points(self.points)
        labels = np.asarray(self.labels, dtype=float).reshape(-1)
        if self.weights is None:
            weights = np.ones(len(labels))
        else:
            weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if not (len(points) == len(labels) == len(weights)):
            raise InvalidInputError(
                f"length mismatch: {len(points)} points, {len(labels)} labels, {len(weights)} weights"
            )
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise InvalidInputError("weights must be finite and nonnegative")
        for name, value in (("points", points), ("labels", labels), ("weights", weights)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def check_abstain_cost(c: float) -> float:
    c = float(c)
    if not 0.0 < c <= 1.0:
        raise InvalidInputError(f"abstention cost must lie in (0, 1], got {c}")
    return c


def check_abstention(a, n: int | None = None) -> np.ndarray:
    """Validate an abstention-probability vector."""
    a = np.asarray(a, dtype=float).reshape(-1)
    if n is not None and len(a) != n:
        raise InvalidInputError(f"abstention vector has length {len(a)}, expected {n}")
    if np.any(a < 0.0) or np.any(a > 1.0) or not np.all(np.isfinite(a)):
        raise InvalidInputError("abstention probabilities must lie in [0, 1]")
    return a


def point_loss(kind: str, y, y_hat):
    """Base loss between labels; vectorizes over numpy arrays.

    ``zero-one`` is ``|y - y_hat|`` on binary labels, ``squared`` is ``(y - y_hat)**2``.
    """
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if kind == ZERO_ONE:
        if not (np.all(np.isin(y, (0.0, 1.0))) and np.all(np.isin(y_hat, (0.0, 1.0)))):
            raise InvalidInputError("zero-one loss needs labels in {0, 1}")
        out = np.abs(y - y_hat)
    elif kind == SQUARED:
        out = (y - y_hat) ** 2
    else:
        raise InvalidInputError(f"unknown loss kind {kind!r}")
    return float(out) if out.ndim == 0 else out


def avg_loss(f, h, x, kind: str) -> float:
    """Mean loss between the predictions of ``f`` and ``h`` on the points ``x``."""
    x = as_points(x)
    if len(x) == 0:
        raise InvalidInputError("average loss of an empty sequence is undefined")
    return float(np.mean(point_loss(kind, f.predict(x), h.predict(x))))


def abstention_loss(losses, a, c: float) -> float:
    """(1/n) * sum_i [a_i * c + (1 - a_i) * losses_i]."""
    losses = np.asarray(losses, dtype=float).reshape(-1)
    a = np.asarray(a, dtype=float).reshape(-1)
    if len(losses) != len(a):
        raise InvalidInputError(f"{len(losses)} losses but {len(a)} abstention probabilities")
    if len(a) == 0:
        raise InvalidInputError("empty test set")
    if np.any(losses < 0):
        raise InvalidInputError("per-point losses must be nonnegative")
    return float(np.mean(a * c + (1.0 - a) * losses))


def subset_to_abstention(subset, n: int) -> np.ndarray:
    """Indicator vector of an abstention index set."""
    a = np.zeros(n)
    a[list(subset)] = 1.0
    return a
