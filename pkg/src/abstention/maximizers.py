"""Loss maximization over the version space.

``flip_maximize`` turns the weighted ERM oracle into an approximate maximizer
of the abstention loss for classification; ``cdt_maximize_regression`` does
the same for linear regression through a two-ellipsoid quadratic program. The
brute-force routines are independent ground truth for tests.
"""
from __future__ import annotations

import numpy as np
from scipy import optimize

from .cdt import CdtProblem, Ellipsoid, cdt_solve_approx
from .core import (
    ZERO_ONE,
    CapacityError,
    InfeasibleError,
    InvalidInputError,
    LabeledDataset,
    as_points,
    check_abstention,
    point_loss,
)
from .hypothesis import FiniteClass, Linear, erm_weighted

MAX_BRUTE_FORCE_CLASS = 2**20
MAX_BRUTE_FORCE_DIM = 3


def flip_weights(a, n: int | None = None) -> np.ndarray:
    """Integer weights floor(3n(1 - a_i)), rounded to 12 decimals before flooring."""
    a = check_abstention(a)
    n = len(a) if n is None else n
    return np.floor(np.round(3 * n * (1.0 - a), 12)).astype(np.int64)


def flip_dataset(train: LabeledDataset, test, h, a) -> LabeledDataset:
    """Weighted artificial dataset: heavy training copies plus flipped test points."""
    test = as_points(test)
    n = len(test)
    a = check_abstention(a, n)
    if len(train) and not np.array_equal(h.predict(train.points), train.labels):
        raise InvalidInputError("FLIP needs h to label every training point correctly")
    flipped = 1.0 - h.predict(test)
    train_points = train.points if len(train) else np.empty((0, test.shape[1]))
    return LabeledDataset(
        np.vstack([train_points, test]),
        np.r_[train.labels, flipped],
        np.r_[np.full(len(train), 4.0 * n * n), flip_weights(a, n).astype(float)],
    )


def duplicate_dataset(data: LabeledDataset) -> LabeledDataset:
    """Expand integer weights into literal copies (unit weights)."""
    reps = data.weights.astype(np.int64)
    if not np.array_equal(reps, data.weights):
        raise InvalidInputError("duplication needs integer weights")
    return LabeledDataset(np.repeat(data.points, reps, axis=0), np.repeat(data.labels, reps))


def flip_maximize(cls, train: LabeledDataset, test, h, a):
    """Version-space member whose abstention loss is within 1/(3n) of the maximum.

    Training copies carry weight 4n^2 so any training mistake outweighs the at
    most 3n^2 total flip weight; the output is therefore always consistent.
    """
    return erm_weighted(cls, flip_dataset(train, test, h, a), ZERO_ONE)


def brute_force_maximize_classification(cls: FiniteClass, train: LabeledDataset, test, h, a, c: float):
    """Exact maximizer of the abstention loss over consistent members of a finite class."""
    if not isinstance(cls, FiniteClass):
        raise InvalidInputError("brute force needs an explicit finite class")
    if len(cls) > MAX_BRUTE_FORCE_CLASS:
        raise CapacityError(f"class of size {len(cls)} exceeds the enumeration limit")
    test = as_points(test)
    a = check_abstention(a, len(test))
    members = cls.consistent(train)
    if len(members) == 0:
        raise InfeasibleError("version space is empty")
    preds = cls.table[np.ix_(members, cls.domain_index(test))]
    mistakes = (preds != h.predict(test)[None, :]).astype(float)
    values = np.mean(a * c + (1.0 - a) * mistakes, axis=1)
    k = int(np.argmax(values))
    return cls.member(int(members[k])), float(values[k])


def classification_losses(g, h, test) -> np.ndarray:
    return point_loss(ZERO_ONE, g.predict(test), h.predict(test))


# ---------------------------------------------------------------------------
# regression


def regression_problem(train_points, h: Linear, test, a, radius: float) -> CdtProblem:
    """Minimize -(1/n) sum (1 - a_i)((w - w_h).x_i)^2 over the radius version space and unit ball."""
    if radius <= 0:
        raise InvalidInputError("version-space radius must be positive")
    xbar = as_points(train_points)
    x = as_points(test)
    a = check_abstention(a, len(x))
    wh = np.asarray(h.w, dtype=float)
    Q = -(x.T * (1.0 - a)) @ x / len(x)
    M = xbar.T @ xbar / len(xbar)
    return CdtProblem(Q, -2.0 * Q @ wh, float(wh @ Q @ wh), Ellipsoid(M, wh, radius),
                      Ellipsoid.ball(np.zeros(len(wh)), 1.0))


def cdt_tolerance(radius: float, n: int) -> float:
    return min(1e-6, radius / 100.0, 1.0 / (9.0 * n * n))


def cdt_maximize_regression(train_points, h: Linear, test, a, radius: float, eps: float | None = None) -> Linear:
    """Approximate maximizer of the weighted squared discrepancy to ``h`` over the version space.

    The returned predictor is feasible for the original constraints.
    """
    x = as_points(test)
    problem = regression_problem(train_points, h, x, a, radius)
    eps = cdt_tolerance(radius, len(x)) if eps is None else eps
    w = cdt_solve_approx(problem, eps)
    norm = np.linalg.norm(w)
    return Linear(w / norm if norm > 1.0 else w)


def regression_losses(g, h, test) -> np.ndarray:
    x = as_points(test)
    return (x @ (np.asarray(g.w) - np.asarray(h.w))) ** 2


def _sample_boundaries(problem: CdtProblem, rng, count: int) -> np.ndarray:
    d = problem.dim
    c1, c2 = problem.constraint1, problem.constraint2

    def sphere(k):
        u = rng.normal(size=(k, d))
        return u / np.linalg.norm(u, axis=1, keepdims=True)

    L2 = np.linalg.cholesky(np.linalg.inv(c2.matrix))
    on2 = c2.center + sphere(count) @ L2.T * np.sqrt(c2.radius2)
    lam, V = np.linalg.eigh(c1.matrix)
    live = lam > 1e-12 * max(1.0, lam.max())
    u = rng.normal(size=(count, int(live.sum())))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    on1 = c1.center + (u * np.sqrt(c1.radius2 / lam[live])) @ V[:, live].T
    if (~live).any():
        # cylinder directions are bounded only through the second constraint
        span = np.sqrt(c2.radius2 / np.linalg.eigvalsh(c2.matrix)[0]) + np.linalg.norm(c2.center - c1.center)
        on1 = on1 + rng.uniform(-span, span, size=(count, int((~live).sum()))) @ V[:, ~live].T
    inner = c2.center + sphere(count) * rng.uniform(size=(count, 1)) ** (1.0 / d) @ L2.T * np.sqrt(c2.radius2)
    return np.vstack([on2, on1, inner])


def brute_force_minimize_cdt(problem: CdtProblem, seed: int = 0, samples: int = 100_000, restarts: int = 64):
    """Sampling plus multistart SLSQP; returns (w, objective) of the best feasible incumbent."""
    if problem.dim > MAX_BRUTE_FORCE_DIM:
        raise CapacityError(f"brute-force CDT supports d <= {MAX_BRUTE_FORCE_DIM}")
    rng = np.random.default_rng(seed)
    pts = _sample_boundaries(problem, rng, samples // 3 + 1)
    c1, c2 = problem.constraint1, problem.constraint2

    def resid(con, W):
        D = W - con.center
        return np.einsum("ij,jk,ik->i", D, con.matrix, D) - con.radius2

    feasible = (resid(c1, pts) <= 0) & (resid(c2, pts) <= 0)
    values = np.einsum("ij,jk,ik->i", pts, problem.Q0, pts) + pts @ problem.b0 + problem.c0
    values[~feasible] = np.inf
    order = np.argsort(values)
    if not np.isfinite(values[order[0]]):
        # no sampled point is feasible; start from the constraint centers
        starts = [c1.center, c2.center]
        best_w, best_v = None, np.inf
    else:
        best_w, best_v = pts[order[0]], float(values[order[0]])
        top = order[: restarts // 2]
        rest = rng.choice(np.flatnonzero(feasible), size=min(restarts - len(top), int(feasible.sum())), replace=False)
        starts = [pts[i] for i in np.r_[top, rest]]
    cons = [
        {"type": "ineq", "fun": lambda w: -c1.residual(w), "jac": lambda w: -2 * c1.matrix @ (w - c1.center)},
        {"type": "ineq", "fun": lambda w: -c2.residual(w), "jac": lambda w: -2 * c2.matrix @ (w - c2.center)},
    ]
    jac = lambda w: 2 * problem.Q0 @ w + problem.b0  # noqa: E731
    for w0 in starts:
        res = optimize.minimize(problem.objective, w0, jac=jac, constraints=cons, method="SLSQP",
                                options={"ftol": 1e-15, "maxiter": 500})
        if problem.violation(res.x) <= 1e-10 and res.fun < best_v:
            best_w, best_v = res.x, float(res.fun)
    if best_w is None:
        raise InfeasibleError("brute force found no feasible point")
    return best_w, best_v


def brute_force_maximize_regression(problem: CdtProblem, seed: int = 0, samples: int = 100_000, restarts: int = 64):
    """Independent estimate of the maximum loss: returns (w, -min objective)."""
    w, value = brute_force_minimize_cdt(problem, seed, samples, restarts)
    return w, -value
