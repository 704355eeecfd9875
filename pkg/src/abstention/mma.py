"""Min-max abstention: choose abstention probabilities that minimize the
worst-case abstention loss over the version space.

The worst-case loss ``phi(a) = max_g loss(g, h, a)`` is convex in ``a`` and every
oracle answer ``g`` yields an affine minorant of it. ``ellipsoid_minimize`` uses
those minorants as central cuts; ``cutting_plane_minimize`` (Kelley's method)
minimizes their pointwise maximum with an LP. Both track the best witnessed
value and can stop early once it is within a certified gap of the LP lower bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .core import (
    CapacityError,
    InfeasibleError,
    InvalidInputError,
    LabeledDataset,
    NumericError,
    abstention_loss,
    as_points,
    check_abstain_cost,
)
from .hypothesis import FiniteClass, Linear
from .maximizers import (
    cdt_maximize_regression,
    classification_losses,
    flip_maximize,
    regression_losses,
)

FLIP = "flip"
CDT = "cdt"
ELLIPSOID = "ellipsoid"
CUTTING_PLANE = "cutting_plane"

# squared losses on [-1, 1] labels live in [0, 4]; MMA works with unit-bounded losses
REGRESSION_LOSS_SCALE = 0.25


@dataclass(frozen=True)
class BoxViolation:
    direction: np.ndarray


@dataclass(frozen=True)
class Separator:
    """Affine minorant ``value + gradient . (b - point)`` of the worst-case loss.

    ``v`` is the cut direction in original units (``c - loss_i``).
    """

    v: np.ndarray
    value: float
    gradient: np.ndarray
    witness: object = None


def separation_oracle(a, g, h, test, c: float, losses=None):
    """Box check, then the witness cut ``v_i = c - loss(g(x_i), h(x_i))``.

    ``losses`` may be passed to skip recomputing the zero-one disagreements of
    ``g`` and ``h`` (e.g. for scaled regression losses).
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    for i, ai in enumerate(a):
        if ai > 1.0 or ai < 0.0:
            e = np.zeros(len(a))
            e[i] = 1.0 if ai > 1.0 else -1.0
            return BoxViolation(e)
    if losses is None:
        losses = classification_losses(g, h, test)
    losses = np.asarray(losses, dtype=float)
    v = c - losses
    return Separator(v, abstention_loss(losses, a, c), v / len(a), g)


@dataclass
class MinimizeResult:
    point: np.ndarray
    value: float
    witness: object
    iterations: int
    oracle_calls: int
    lower_bound: float
    certified: bool
    trajectory: list = field(default_factory=list)
    repairs: int = 0


def ellipsoid_budget(k: int, eps: float) -> int:
    """Central-cut iterations for radius sqrt(k) down to inscribed radius eps/2."""
    if k <= 0:
        return 0
    return math.ceil(2 * k * (k + 1) * math.log(2 * math.sqrt(k) / eps))


class _Cuts:
    """Recorded minorants and the LP lower bound over the unit box."""

    def __init__(self, k):
        self.k = k
        self.grads = []
        self.offsets = []

    def add(self, point, sep: Separator):
        self.grads.append(np.asarray(sep.gradient, dtype=float))
        self.offsets.append(sep.value - float(sep.gradient @ point))

    def solve(self):
        # min z  s.t.  grad_t . b + offset_t <= z,  0 <= b <= 1
        G = np.array(self.grads)
        A = np.hstack([G, -np.ones((len(G), 1))])
        res = linprog(np.r_[np.zeros(self.k), 1.0], A_ub=A, b_ub=-np.array(self.offsets),
                      bounds=[(0.0, 1.0)] * self.k + [(None, None)], method="highs")
        if res.status != 0:
            return None, -np.inf
        return res.x[: self.k], float(res.fun)


def _repair_shape(shape, floor=1e-12):
    """Keep the shape matrix safely positive definite.

    Near a face of optimal points the ellipsoid keeps flattening until
    rounding breaks definiteness. Raising the small eigenvalues to ``floor``
    times the largest only enlarges the ellipsoid, so it still contains every
    minimizer it contained before.
    """
    if not np.all(np.isfinite(shape)):
        raise NumericError("ellipsoid shape matrix is no longer finite")
    vals, vecs = np.linalg.eigh(shape)
    top = vals.max()
    if not top > 0:
        raise NumericError("ellipsoid shape matrix collapsed", {"eigenvalues": vals})
    if vals.min() >= floor * top:
        return shape, 0
    vals = np.maximum(vals, floor * top)
    return (vecs * vals) @ vecs.T, 1


def _cut(center, shape, Pg, alpha, k):
    """Ellipsoid update for the cut ``g.(x - center) <= -alpha sqrt(g'Pg)``.

    ``Pg`` is ``shape @ g`` already divided by ``sqrt(g'Pg)``. ``alpha = 0`` is
    the central cut; ``-1/k < alpha < 0`` is a shallow cut.
    """
    tau = (1 + k * alpha) / (k + 1)
    sigma = 2 * (1 + k * alpha) / ((k + 1) * (1 + alpha))
    delta = k * k * (1 - alpha * alpha) / (k * k - 1.0)
    shape = delta * (shape - sigma * np.outer(Pg, Pg))
    shape, fixed = _repair_shape(0.5 * (shape + shape.T))
    return center - tau * Pg, shape, fixed


def _face_cuts(center, shape, k, rounds=None):
    """Shallow cuts against faces of [0, 1]^k the ellipsoid pokes far beyond.

    Directions in which the objective is flat are never cut otherwise, and the
    ellipsoid would grow along them without bound. Face cuts remove only
    points outside the box, so every minimizer stays inside.
    """
    repairs = 0
    for _ in range(rounds or k):
        width = np.sqrt(np.diag(shape))
        # depth of the cut x_i <= 1 and of -x_i <= 0, in units of the width
        up = (center - 1.0) / width
        down = -center / width
        i_up, i_down = int(np.argmax(up)), int(np.argmax(down))
        if up[i_up] >= down[i_down]:
            i, alpha, sign = i_up, up[i_up], 1.0
        else:
            i, alpha, sign = i_down, down[i_down], -1.0
        # only cuts that shrink the volume by a fixed factor are worth taking
        if alpha <= -0.5 / k:
            break
        alpha = min(alpha, 0.5)
        center, shape, fixed = _cut(center, shape, sign * shape[:, i] / width[i], alpha, k)
        repairs += fixed
    return center, shape, repairs


def ellipsoid_minimize(k: int, sep: Callable, radius: float | None = None, iterations: int | None = None,
                       eps: float | None = None, slack: float = 0.0, stop_gap: float | None = None,
                       check_every: int | None = None) -> MinimizeResult:
    """Central-cut ellipsoid over the box ``[0, 1]^k`` driven by a separation procedure.

    Starts from the ball of radius ``sqrt(k)`` around the all-1/2 point. ``sep``
    returns :class:`BoxViolation` outside the box and a :class:`Separator`
    inside. The incumbent is the queried point with the smallest witnessed
    value. If ``stop_gap`` is set, the run stops once ``incumbent + slack`` is
    within ``stop_gap`` of the LP lower bound built from all witnessed cuts.
    """
    if k < 1:
        raise InvalidInputError("ellipsoid needs at least one coordinate")
    radius = math.sqrt(k) if radius is None else radius
    if iterations is None:
        if eps is None:
            raise InvalidInputError("give either an iteration budget or eps")
        iterations = ellipsoid_budget(k, eps)
    check_every = check_every or (k + 1)
    center = np.full(k, 0.5)
    shape = np.eye(k) * radius**2
    cuts = _Cuts(k)
    best = None
    trajectory = []
    calls = 0
    lower = -np.inf
    certified = False
    repairs = 0
    it = 0
    for it in range(1, iterations + 1):
        out = sep(center)
        if isinstance(out, BoxViolation):
            direction = out.direction
        else:
            calls += 1
            cuts.add(center, out)
            if best is None or out.value < best[1]:
                best = (center.copy(), out.value, out.witness)
                trajectory.append((it, out.value))
            direction = out.v
            if not np.any(direction):
                # the witness is flat in a: its value is a global lower bound
                lower = max(lower, out.value)
        if best is not None and stop_gap is not None and (calls % check_every == 0 or lower > -np.inf):
            if lower == -np.inf or best[1] + slack > lower + stop_gap:
                lower = max(lower, cuts.solve()[1]) if cuts.grads else lower
            if best[1] + slack <= lower + stop_gap:
                certified = True
                break
        if not np.any(direction):
            break
        Pg = shape @ direction
        gPg = float(direction @ Pg)
        if not gPg > 0:
            raise NumericError("ellipsoid shape matrix lost positive definiteness",
                               {"iteration": it, "trajectory": trajectory})
        Pg = Pg / math.sqrt(gPg)
        if k == 1:
            center = center - Pg / 2.0
            shape = shape / 4.0
        else:
            try:
                center, shape, fixed = _cut(center, shape, Pg, 0.0, k)
                center, shape, more = _face_cuts(center, shape, k)
            except NumericError as err:
                raise NumericError(str(err), {"iteration": it, "trajectory": trajectory}) from None
            repairs += fixed + more
    if best is None:
        raise InvalidInputError("ellipsoid never queried a point inside the box")
    if not certified and cuts.grads:
        lower = max(lower, cuts.solve()[1])
    return MinimizeResult(best[0], best[1], best[2], it, calls, lower, certified, trajectory, repairs)


def cutting_plane_minimize(k: int, sep: Callable, slack: float = 0.0, stop_gap: float = 0.0,
                           max_iterations: int = 10_000, start=None) -> MinimizeResult:
    """Kelley's cutting-plane method on the box ``[0, 1]^k``.

    Each LP minimizer of the current model is queried next; the run stops when
    the best witnessed value plus ``slack`` is within ``stop_gap`` of the model
    minimum (a certified lower bound).
    """
    point = np.zeros(k) if start is None else np.asarray(start, dtype=float)
    cuts = _Cuts(k)
    best = None
    trajectory = []
    lower = -np.inf
    certified = False
    it = 0
    for it in range(1, max_iterations + 1):
        out = sep(point)
        if isinstance(out, BoxViolation):
            raise InvalidInputError("cutting-plane iterates must stay in the box")
        cuts.add(point, out)
        if best is None or out.value < best[1]:
            best = (point.copy(), out.value, out.witness)
            trajectory.append((it, out.value))
        nxt, lp = cuts.solve()
        lower = max(lower, lp)
        if best[1] + slack <= lower + stop_gap:
            certified = True
            break
        if nxt is None:
            break
        point = np.clip(nxt, 0.0, 1.0)
    return MinimizeResult(best[0], best[1], best[2], it, it, lower, certified, trajectory)


@dataclass
class MmaResult:
    """Abstention vector with its certified worst-case bound.

    ``certified_bound`` is the best witnessed loss plus the oracle slack, in the
    original loss units; it upper-bounds the worst case over the version space.
    """

    a: np.ndarray
    certified_bound: float
    witness_value: float
    witness: object
    slack: float
    diagnostics: dict

    def to_json(self) -> dict:
        return {
            "certified_bound": self.certified_bound,
            "witness_value": self.witness_value,
            "slack": self.slack,
            **{k: v for k, v in self.diagnostics.items() if k != "trajectory"},
            "trajectory": [[int(i), float(v)] for i, v in self.diagnostics.get("trajectory", [])],
        }


def _flippable_groups(cls, train, test, h, inverse, k):
    """Groups on which some version-space member disagrees with h."""
    n = len(test)
    keep = np.zeros(k, dtype=bool)
    for u in range(k):
        a = np.ones(n)
        a[inverse == u] = 0.0
        g = flip_maximize(cls, train, test, h, a)
        keep[u] = bool(np.any(classification_losses(g, h, test)[inverse == u]))
    return keep


def mma(train: LabeledDataset, test, h, c: float, maximizer: str = FLIP, cls=None, radius: float | None = None,
        method: str = ELLIPSOID, early_stop: bool = True, prune: bool = True, max_iterations: int | None = None):
    """Min-max abstention against the version space of ``train``.

    ``maximizer="flip"`` needs ``cls`` (a finite class or the threshold family);
    ``maximizer="cdt"`` needs the version-space ``radius`` and a linear ``h``.
    Identical test points share one abstention probability (the worst-case loss
    is convex and symmetric under swapping them, so this loses nothing), and for
    classification points no member can flip are fixed at 0.

    The returned bound satisfies ``bound <= OPT + 1/n`` where OPT is the
    minimum worst-case loss. If the regression solver fails to converge the
    run continues from its best feasible point and
    ``diagnostics["oracle_failures"]`` counts such queries; the bound is only
    certified when that count is zero.
    """
    c = check_abstain_cost(c)
    test = as_points(test)
    n = len(test)
    if n == 0:
        raise InvalidInputError("empty test set")
    failures = []
    if maximizer == FLIP:
        if cls is None:
            raise InvalidInputError("FLIP needs a hypothesis class")
        if len(train) and not np.array_equal(h.predict(train.points), train.labels):
            raise InvalidInputError("h must be consistent with the training labels")
        scale = 1.0

        def oracle(a):
            g = flip_maximize(cls, train, test, h, a)
            return g, classification_losses(g, h, test)
    elif maximizer == CDT:
        if radius is None or radius <= 0:
            raise InvalidInputError("the regression maximizer needs a positive radius")
        if not isinstance(h, Linear):
            raise InvalidInputError("the regression maximizer needs a linear h")
        scale = REGRESSION_LOSS_SCALE

        def oracle(a):
            try:
                g = cdt_maximize_regression(train.points, h, test, a, radius)
            except NumericError as err:
                # keep going from the solver's best feasible point, but record
                # that the bound at this query is not certified
                failures.append(err.diagnostics.get("value"))
                w = np.asarray(err.diagnostics["incumbent"], dtype=float)
                g = Linear(w / max(1.0, np.linalg.norm(w)))
            return g, scale * regression_losses(g, h, test)
    else:
        raise InvalidInputError(f"unknown maximizer {maximizer!r}")

    c_eff = c * scale
    slack = 1.0 / (3 * n)
    stop_gap = 1.0 / n
    groups, inverse, counts = np.unique(test, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    k_all = len(groups)
    keep = np.ones(k_all, dtype=bool)
    if maximizer == FLIP and prune:
        keep = _flippable_groups(cls, train, test, h, inverse, k_all)
    active = np.flatnonzero(keep)
    k = len(active)
    position = np.full(k_all, -1)
    position[active] = np.arange(k)
    weights = counts[active] / n

    def expand(b):
        a = np.zeros(n)
        live = position[inverse] >= 0
        a[live] = b[position[inverse][live]]
        return a

    def sep(b):
        for i, bi in enumerate(b):
            if bi > 1.0 or bi < 0.0:
                e = np.zeros(k)
                e[i] = 1.0 if bi > 1.0 else -1.0
                return BoxViolation(e)
        a = expand(b)
        g, losses = oracle(a)
        group_loss = np.zeros(k_all)
        group_loss[inverse] = losses
        v = c_eff - group_loss[active]
        return Separator(v, abstention_loss(losses, a, c_eff), weights * v, g)

    diagnostics = {"n": n, "groups": k_all, "active_groups": k, "method": method,
                   "maximizer": maximizer, "loss_scale": scale}
    if k == 0:
        g, losses = oracle(np.zeros(n))
        value = abstention_loss(losses, np.zeros(n), c_eff)
        res = MinimizeResult(np.zeros(0), value, g, 0, 1, value, True, [(0, value)])
    elif method == ELLIPSOID:
        eps = 1.0 / (3 * n)
        budget = ellipsoid_budget(k, eps) if max_iterations is None else max_iterations
        res = ellipsoid_minimize(k, sep, iterations=budget, slack=slack,
                                 stop_gap=stop_gap if early_stop else None)
        diagnostics["budget"] = budget
    elif method == CUTTING_PLANE:
        res = cutting_plane_minimize(k, sep, slack=slack, stop_gap=stop_gap,
                                     max_iterations=max_iterations or 10_000)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    a_hat = expand(res.point)
    diagnostics.update(iterations=res.iterations, oracle_calls=res.oracle_calls + (k if maximizer == FLIP and prune else 0),
                       lower_bound=res.lower_bound / scale, certified_stop=res.certified,
                       trajectory=[(i, v / scale) for i, v in res.trajectory], shape_repairs=res.repairs,
                       oracle_failures=len(failures))
    return MmaResult(a_hat, (res.value + slack) / scale, res.value / scale, res.witness, slack / scale, diagnostics)


def joint_selective_prediction(cls: FiniteClass, train: LabeledDataset, test, c: float, **kwargs):
    """Minimize the certified bound jointly over consistent ``h`` and abstentions."""
    if not isinstance(cls, FiniteClass):
        raise InvalidInputError("joint selection enumerates an explicit finite class")
    if len(cls) > 4096:
        raise CapacityError("joint selection supports classes of at most 4096 members")
    members = cls.consistent(train)
    if len(members) == 0:
        raise InfeasibleError("version space is empty")
    best = None
    for j in members:
        h = cls.member(int(j))
        res = mma(train, test, h, c, FLIP, cls=cls, **kwargs)
        if best is None or res.certified_bound < best[1].certified_bound:
            best = (h, res)
    return best


def grid_search_min(n: int, c: float, step: float = 1e-3, loss_vectors=None, value: Callable | None = None):
    """Exhaustive grid minimization of the worst-case loss for ``n <= 3``.

    With ``loss_vectors`` (the per-point losses of every version-space member)
    the maximum is exact; the last coordinate is minimized exactly over its
    grid line using convexity. ``value(a)`` may instead supply the worst-case
    loss directly, in which case every grid point is evaluated.
    """
    if n > 3:
        raise CapacityError("grid search supports at most 3 test points")
    size = int(round(1.0 / step)) + 1
    ticks = np.linspace(0.0, 1.0, size)
    if value is not None:
        mesh = np.stack(np.meshgrid(*[ticks] * n, indexing="ij"), axis=-1).reshape(-1, n)
        vals = np.array([value(a) for a in mesh])
        j = int(np.argmin(vals))
        return mesh[j], float(vals[j])
    L = np.unique(np.asarray(loss_vectors, dtype=float).reshape(-1, n), axis=0)
    if n == 1:
        outer = np.zeros((1, 0))
    else:
        outer = np.stack(np.meshgrid(*[ticks] * (n - 1), indexing="ij"), axis=-1).reshape(-1, n - 1)
    # worst case along the last coordinate t: (c t + max_j [base_j + (1 - t) last_j]) / n
    base = c * outer.sum(axis=1)[:, None] + (1.0 - outer) @ L[:, : n - 1].T
    slopes = np.unique(L[:, n - 1])
    # lines sharing a slope collapse to their upper envelope
    tops = np.stack([base[:, L[:, n - 1] == s].max(axis=1) for s in slopes], axis=1)

    def values_at(t):
        return (c * t + np.max(tops + (1.0 - t)[:, None] * slopes[None, :], axis=1)) / n

    # the continuous minimizer is 0, 1 or a crossing of two lines; the grid
    # minimum of a convex function sits next to it
    cands = [np.zeros(len(outer)), np.ones(len(outer))]
    for i in range(len(slopes)):
        for j in range(i + 1, len(slopes)):
            cross = 1.0 - (tops[:, i] - tops[:, j]) / (slopes[j] - slopes[i])
            cands.append(np.clip(cross, 0.0, 1.0))
    best_t, best_v = None, None
    for t in cands:
        for snap in (np.floor, np.ceil):
            tg = np.clip(snap(np.round(t / step, 9)) * step, 0.0, 1.0)
            tg = ticks[np.clip(np.round(tg / step).astype(np.int64), 0, size - 1)]
            v = values_at(tg)
            if best_v is None:
                best_t, best_v = tg, v
            else:
                better = v < best_v
                best_t = np.where(better, tg, best_t)
                best_v = np.where(better, v, best_v)
    p = int(np.argmin(best_v))
    return np.r_[outer[p], best_t[p]], float(best_v[p])
