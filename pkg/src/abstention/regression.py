"""Version spaces for bounded linear regression and the abstaining regression pipeline."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, LabeledDataset, as_points
from .hypothesis import Linear, LinearClass, fit_ball_least_squares, version_space_membership
from .maximizers import cdt_maximize_regression, regression_losses
from .mma import CDT, CUTTING_PLANE, MmaResult, mma


def vs_radius(n: int, delta: float) -> float:
    """8 / sqrt(n) + sqrt(2 ln(3 / delta) / n); the unit-ball class has Rademacher complexity 1/sqrt(n)."""
    if n < 1:
        raise InvalidInputError("n must be positive")
    if not 0.0 < delta < 1.0:
        raise InvalidInputError("delta must lie in (0, 1)")
    return 8.0 / math.sqrt(n) + math.sqrt(2.0 * math.log(3.0 / delta) / n)


@dataclass(frozen=True, eq=False)
class RegressionVersionSpace:
    """Predictors whose mean squared discrepancy to ``h`` on the training points is at most ``radius``."""

    train_features: np.ndarray
    h: Linear
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidInputError("version-space radius must be positive")
        object.__setattr__(self, "train_features", as_points(self.train_features))

    def contains(self, g: Linear) -> bool:
        train = LabeledDataset(self.train_features, np.zeros(len(self.train_features)))
        return version_space_membership(LinearClass(self.train_features.shape[1]), train, g,
                                        self.radius, h=self.h)

    def worst_case(self, test, a=None):
        """(maximizer, mean squared discrepancy to h) over the version space on ``test``."""
        x = as_points(test)
        a = np.zeros(len(x)) if a is None else a
        g = cdt_maximize_regression(self.train_features, self.h, x, a, self.radius)
        return g, float(np.mean((1.0 - np.asarray(a)) * regression_losses(g, self.h, x)))


def _check_regression_data(data: LabeledDataset):
    if len(data) and np.max(np.linalg.norm(data.points, axis=1)) > 1.0 + 1e-12:
        raise InvalidInputError("regression features must lie in the unit ball")
    if len(data) and np.max(np.abs(data.labels)) > 1.0 + 1e-12:
        raise InvalidInputError("regression labels must lie in [-1, 1]")


def build_version_space(train: LabeledDataset, delta: float):
    """Least-squares fit on the unit ball and the version space around it."""
    _check_regression_data(train)
    h = fit_ball_least_squares(train)
    return h, RegressionVersionSpace(train.points, h, vs_radius(len(train), delta))


@dataclass
class RegressionResult:
    h: Linear
    a: np.ndarray
    certified_bound: float
    version_space: RegressionVersionSpace
    mma: MmaResult


def regression_pipeline(train: LabeledDataset, test, c: float, delta: float | None = None,
                        method: str = CUTTING_PLANE) -> RegressionResult:
    """Fit, build the version space and choose abstentions against it.

    ``delta`` defaults to 1/n. The certified bound is in raw squared-loss units.
    """
    delta = 1.0 / len(train) if delta is None else delta
    h, vs = build_version_space(train, delta)
    res = mma(train, test, h, c, CDT, radius=vs.radius, method=method)
    return RegressionResult(h, res.a, res.certified_bound, vs, res)
