"""Quadratic minimization over one or two ellipsoids.

The two-ellipsoid (Celis-Dennis-Tapia) problem is solved by enumerating KKT
points over the four multiplier activity patterns and keeping the best feasible
one. A global minimizer has a Lagrangian Hessian with at most one negative
eigenvalue, so the sphere-stationary enumeration only looks at multipliers
lambda2 > -nu_2 (nu_2 the second smallest Hessian eigenvalue).

All problems are first mapped to coordinates in which the strictly convex
constraint is the ball ``||s||^2 <= r2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .core import InfeasibleError, InvalidInputError, NumericError

_EIG_REL = 1e-11


@dataclass(frozen=True)
class Ellipsoid:
    """The set ``(w - center)^T matrix (w - center) <= radius2``."""

    matrix: np.ndarray
    center: np.ndarray
    radius2: float

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        center = np.asarray(self.center, dtype=float).reshape(-1)
        if m.shape != (len(center), len(center)):
            raise InvalidInputError(f"ellipsoid matrix {m.shape} does not match center {center.shape}")
        object.__setattr__(self, "matrix", 0.5 * (m + m.T))
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius2", float(self.radius2))

    def residual(self, w) -> float:
        """Constraint value; nonpositive inside the ellipsoid."""
        dw = np.asarray(w, dtype=float) - self.center
        return float(dw @ self.matrix @ dw - self.radius2)

    @classmethod
    def ball(cls, center, radius2=1.0):
        center = np.asarray(center, dtype=float).reshape(-1)
        return cls(np.eye(len(center)), center, radius2)


@dataclass(frozen=True)
class CdtProblem:
    """Minimize ``w^T Q0 w + b0 . w + c0`` over two ellipsoids.

    ``constraint1`` may be degenerate (singular PSD matrix); ``constraint2``
    must be strictly convex.
    """

    Q0: np.ndarray
    b0: np.ndarray
    c0: float
    constraint1: Ellipsoid
    constraint2: Ellipsoid

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.Q0, dtype=float))
        b = np.asarray(self.b0, dtype=float).reshape(-1)
        d = len(b)
        if q.shape != (d, d):
            raise InvalidInputError(f"Q0 has shape {q.shape}, expected {(d, d)}")
        for con in (self.constraint1, self.constraint2):
            if con.matrix.shape != (d, d):
                raise InvalidInputError("constraint dimension does not match objective")
        scale = max(1.0, np.abs(self.constraint1.matrix).max())
        if np.linalg.eigvalsh(self.constraint1.matrix)[0] < -1e-10 * scale:
            raise InvalidInputError("constraint1 matrix must be positive semidefinite")
        if np.linalg.eigvalsh(self.constraint2.matrix)[0] <= 0:
            raise InvalidInputError("constraint2 matrix must be positive definite")
        object.__setattr__(self, "Q0", 0.5 * (q + q.T))
        object.__setattr__(self, "b0", b)
        object.__setattr__(self, "c0", float(self.c0))

    @property
    def dim(self) -> int:
        return len(self.b0)

    def objective(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float(w @ self.Q0 @ w + self.b0 @ w + self.c0)

    def violation(self, w) -> float:
        return max(0.0, self.constraint1.residual(w), self.constraint2.residual(w))

    def tightened(self, eps: float) -> "CdtProblem":
        c1, c2 = self.constraint1, self.constraint2
        return CdtProblem(
            self.Q0, self.b0, self.c0,
            Ellipsoid(c1.matrix, c1.center, c1.radius2 - eps),
            Ellipsoid(c2.matrix, c2.center, c2.radius2 - eps),
        )


@dataclass
class KKTReport:
    lambda1: float
    lambda2: float
    stationarity: float
    violation1: float
    violation2: float
    slackness1: float
    slackness2: float
    pattern: str
    n_candidates: int = 0
    extra: dict = field(default_factory=dict)

    def max_residual(self) -> float:
        return max(self.stationarity, self.violation1, self.violation2, self.slackness1, self.slackness2)


# ---------------------------------------------------------------------------
# ball-constrained pieces


def _eig_groups(mu, beta, tol):
    """Group (ascending) eigenvalues closer than ``tol``; return values, weights, member lists."""
    groups = []
    for j, m in enumerate(mu):
        if groups and abs(m - groups[-1][0]) <= tol:
            groups[-1][1].append(j)
        else:
            groups.append([m, [j]])
    nus = np.array([np.mean(mu[g[1]]) for g in groups])
    gammas = np.array([np.sum(beta[g[1]] ** 2) for g in groups])
    return nus, gammas, [g[1] for g in groups]


def _secular_roots(nus, gammas, r, lo, hi):
    """Roots of psi(lam) = sum gamma/(nu+lam)^2 = r on the smooth interval (lo, hi)."""
    live = gammas > 0
    nus, gammas = nus[live], gammas[live]
    if not len(nus):
        return []

    def psi(lam):
        return float(np.sum(gammas / (nus + lam) ** 2))

    def h(lam):
        # 1/sqrt(psi) is nearly linear near a pole: better conditioned than psi - r
        return 1.0 / np.sqrt(psi(lam)) - 1.0 / np.sqrt(r)

    def inner(edge, direction):
        # point just inside an edge where psi > r if the edge is a pole
        dist = np.abs(nus + edge)
        k = int(np.argmin(dist))
        if gammas[k] > 0 and dist[k] < 1e-300 + 1e-12 * max(1.0, abs(edge)):
            delta = 0.5 * np.sqrt(gammas[k] / r)
            delta = min(delta, 0.5 * (hi - lo)) if np.isfinite(hi) else delta
            return edge + direction * delta
        return edge

    roots = []
    if not np.isfinite(hi):
        a = inner(lo, +1.0)
        if a == lo and not np.isfinite(psi(lo)):
            return roots
        if psi(a) < r:
            return roots
        total = np.sqrt(np.sum(gammas))
        b = max(a, -nus.min()) + total / np.sqrt(r) + 1.0
        while psi(b) > r:
            b = 2.0 * b + 1.0
        if psi(a) == r:
            return [a]
        roots.append(optimize.brentq(h, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))
        return roots
    a, b = inner(lo, +1.0), inner(hi, -1.0)
    if not a < b:
        return roots

    def dpsi(lam):
        return float(-np.sum(gammas / (nus + lam) ** 3))

    # psi is convex on the interval: locate its minimum through the sign of psi'
    da, db = dpsi(a), dpsi(b)
    if da >= 0:
        x_min = a
    elif db <= 0:
        x_min = b
    else:
        x_min = optimize.brentq(dpsi, a, b, xtol=1e-14 * max(1.0, abs(b)), maxiter=200)
    if psi(x_min) > r:
        return roots
    opts = dict(xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if psi(a) > r and a < x_min:
        roots.append(optimize.brentq(h, a, x_min, **opts))
    if psi(b) > r and x_min < b:
        roots.append(optimize.brentq(h, x_min, b, **opts))
    return roots


def sphere_stationary_points(H, g, r):
    """KKT points of ``min s^T H s + g.s`` on the sphere ``||s||^2 = r``.

    Returns a list of ``(s, lam, tag)`` with ``2(H + lam I) s = -g`` and at most
    one negative eigenvalue of ``H + lam I``. Tags identify the branch
    (``psd`` is the trust-region branch, ``neg-lo``/``neg-hi`` the two roots with
    one negative eigenvalue, ``hard*`` the degenerate points).
    """
    mu, U = np.linalg.eigh(H)
    beta = U.T @ g / 2.0
    scale = max(1.0, np.abs(mu).max())
    nus, gammas, members = _eig_groups(mu, beta, _EIG_REL * scale)
    gtol = (1e-12 * max(1.0, np.linalg.norm(beta))) ** 2
    gammas = np.where(gammas <= gtol, 0.0, gammas)

    def point(lam):
        return U @ (-beta / (mu + lam))

    out = []
    # second smallest eigenvalue counted with multiplicity bounds the search region
    nu2 = mu[1] if len(mu) > 1 else -np.inf
    first_mult = len(members[0])
    pole = -nus[0]
    right_roots = _secular_roots(nus, gammas, r, pole, np.inf)
    if gammas[0] > 0:
        for lam in right_roots:
            out.append((point(lam), lam, "psd"))
    else:
        for lam in right_roots:
            out.append((point(lam), lam, "psd"))
    if first_mult == 1 and np.isfinite(nu2) and nus[0] < nu2 - _EIG_REL * scale:
        lo = -nus[1]
        if gammas[0] > 0:
            roots = _secular_roots(nus, gammas, r, lo, pole)
            tags = ["neg-lo", "neg-hi"] if len(roots) == 2 else ["neg-" + ("lo" if gammas[1] > 0 else "hi")]
            for lam, tag in zip(roots, tags):
                out.append((point(lam), lam, tag))
    # degenerate points at eigenvalues carrying no gradient weight
    for k in range(min(2, len(nus))):
        if gammas[k] > 0 or (k == 1 and first_mult > 1):
            continue
        lam = -nus[k]
        others = np.ones(len(mu), dtype=bool)
        others[members[k]] = False
        base = np.zeros(len(mu))
        base[others] = -beta[others] / (mu[others] + lam)
        rest = r - base @ base
        if rest < -1e-12 * r:
            continue
        tau = np.sqrt(max(rest, 0.0))
        e = np.zeros(len(mu))
        e[members[k][0]] = 1.0
        for sign, tag in ((1.0, "+"), (-1.0, "-")):
            out.append((U @ (base + sign * tau * e), lam, f"hard{k + 1}{tag}"))
            if tau == 0.0:
                break
    return out


def _ball_trs(H, g, r):
    """Global minimizer of ``s^T H s + g.s`` over ``||s||^2 <= r``; returns (s, lam)."""
    mu, U = np.linalg.eigh(H)
    beta = U.T @ g / 2.0
    scale = max(1.0, np.abs(mu).max())
    tol = _EIG_REL * scale
    if mu[0] >= -tol:
        pos = mu > tol
        s_coef = np.zeros(len(mu))
        s_coef[pos] = -beta[pos] / mu[pos]
        consistent = np.all(np.abs(beta[~pos]) <= 1e-12 * max(1.0, np.linalg.norm(beta)))
        if consistent and s_coef @ s_coef <= r:
            return U @ s_coef, 0.0
    best = None
    for s, lam, tag in sphere_stationary_points(H, g, r):
        if tag == "psd" or tag.startswith("hard1"):
            if lam < -tol:
                continue
            val = s @ H @ s + g @ s
            if best is None or val < best[0] - 1e-15 * max(1.0, abs(val)):
                best = (val, s, max(lam, 0.0))
    if best is None:
        raise NumericError("trust-region secular equation has no admissible root",
                           {"eigenvalues": mu.tolist(), "beta": beta.tolist()})
    return best[1], best[2]


def trust_region_solve(Q0, b0, M=None, center=None, radius2=1.0, return_multiplier=False):
    """Global minimizer of ``w^T Q0 w + b0.w`` over ``(w-center)^T M (w-center) <= radius2``.

    Uses an eigendecomposition and a safeguarded root search on the secular
    equation; the hard case (gradient orthogonal to the bottom eigenspace) is
    handled by adding a boundary-reaching eigenvector component.
    """
    Q0 = np.atleast_2d(np.asarray(Q0, dtype=float))
    Q0 = 0.5 * (Q0 + Q0.T)
    b0 = np.asarray(b0, dtype=float).reshape(-1)
    d = len(b0)
    M = np.eye(d) if M is None else np.atleast_2d(np.asarray(M, dtype=float))
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float).reshape(-1)
    if radius2 < 0:
        raise InvalidInputError("radius2 must be nonnegative")
    try:
        L = np.linalg.cholesky(0.5 * (M + M.T))
    except np.linalg.LinAlgError:
        raise InvalidInputError("trust-region constraint matrix must be positive definite") from None
    if np.min(np.diag(L)) <= 0:
        raise InvalidInputError("trust-region constraint matrix must be positive definite")
    # w = center + L^{-T} s
    Linv_T = linalg.solve_triangular(L, np.eye(d), lower=True).T
    H = Linv_T.T @ Q0 @ Linv_T
    g = Linv_T.T @ (2.0 * Q0 @ center + b0)
    s, lam = _ball_trs(0.5 * (H + H.T), g, float(radius2))
    w = center + Linv_T @ s
    return (w, lam) if return_multiplier else w


# ---------------------------------------------------------------------------
# two ellipsoids


@dataclass
class _Reduced:
    """Problem in coordinates where constraint2 is the ball ||s||^2 <= r2."""

    Q: np.ndarray
    b: np.ndarray
    c: float
    M: np.ndarray
    m: np.ndarray
    r1: float
    r2: float
    origin: np.ndarray
    T: np.ndarray  # w = origin + T s

    def lift(self, s):
        return self.origin + self.T @ s

    def g1(self, s):
        ds = s - self.m
        return float(ds @ self.M @ ds - self.r1)

    def value(self, s):
        return float(s @ self.Q @ s + self.b @ s + self.c)


def _reduce(problem: CdtProblem) -> _Reduced:
    c1, c2 = problem.constraint1, problem.constraint2
    L = np.linalg.cholesky(c2.matrix)
    T = linalg.solve_triangular(L, np.eye(problem.dim), lower=True).T
    Q = T.T @ problem.Q0 @ T
    b = T.T @ (2.0 * problem.Q0 @ c2.center + problem.b0)
    M = T.T @ c1.matrix @ T
    m = L.T @ (c1.center - c2.center)
    return _Reduced(0.5 * (Q + Q.T), b, problem.objective(c2.center), 0.5 * (M + M.T), m,
                    c1.radius2, c2.radius2, c2.center, T)


def _lambda_grid(size, poles):
    grid = [0.0] + list(np.logspace(-8, 8, size))
    for p in poles:
        for k in range(1, 9):
            grid.extend((p * (1 - 10.0 ** -k), p * (1 + 10.0 ** -k)))
    return np.unique(np.array([g for g in grid if g >= 0]))


def _pencil_poles(Q, M):
    """Positive finite lambda with det(Q + lambda M) = 0."""
    try:
        vals = linalg.eigvals(-Q, M)
    except (linalg.LinAlgError, ValueError):
        return []
    vals = vals[np.isfinite(vals)]
    vals = vals[np.abs(vals.imag) <= 1e-9 * np.maximum(1.0, np.abs(vals.real))].real
    return sorted(v for v in vals if v > 0)


def _bisect(f, lo, hi, f_lo, iters=200):
    """Bisection on a function that may return None where undefined."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        val = f(mid)
        if val is None:
            return None
        if np.sign(val[0]) == np.sign(f_lo):
            lo, f_lo = mid, val[0]
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return lo, hi


def _candidates(R: _Reduced, grid_size: int):
    """Yield (s, lambda1, lambda2, pattern) KKT candidates of the reduced problem."""
    cands = []
    Q, b, M, m = R.Q, R.b, R.M, R.m
    scale = max(1.0, np.abs(Q).max(), np.abs(M).max())

    # (0, 0): unconstrained stationary points of a convex objective
    mu, U = np.linalg.eigh(Q)
    if mu[0] >= -_EIG_REL * scale:
        s0, *_ = np.linalg.lstsq(Q, -b / 2.0, rcond=1e-12)
        if np.linalg.norm(2 * Q @ s0 + b) <= 1e-9 * max(1.0, np.linalg.norm(b)):
            null = U[:, mu <= _EIG_REL * scale]
            cands.append((s0, 0.0, 0.0, "interior"))
            if null.shape[1]:
                cands.append((s0 + null @ (null.T @ (m - s0)), 0.0, 0.0, "interior"))

    # (0, +): ball only
    for s, lam, tag in sphere_stationary_points(Q, b, R.r2):
        if lam >= -1e-12 * scale:
            cands.append((s, 0.0, max(lam, 0.0), "ball:" + tag))

    poles = _pencil_poles(Q, M)
    grid = _lambda_grid(grid_size, poles)

    # (+, 0): ellipsoid-1 only, scanned over lambda1 between pencil poles
    def solve_c(lam1):
        H = Q + lam1 * M
        rhs = -b / 2.0 + lam1 * M @ m
        s, *_ = np.linalg.lstsq(H, rhs, rcond=1e-13)
        if np.linalg.norm(H @ s - rhs) > 1e-9 * max(1.0, np.linalg.norm(rhs)):
            return None
        return R.g1(s), s

    prev = None
    for lam1 in grid[1:]:
        cur = solve_c(lam1)
        if cur is not None:
            if prev is not None and np.sign(cur[0]) != np.sign(prev[1][0]) and not any(
                    prev[0] < p < lam1 for p in poles):
                br = _bisect(solve_c, prev[0], lam1, prev[1][0])
                if br is not None:
                    for lam in br:
                        val = solve_c(lam)
                        if val is not None:
                            cands.append((val[1], lam, 0.0, "ellipsoid"))
            if abs(cur[0]) <= 1e-12 * max(1.0, R.r1):
                cands.append((cur[1], lam1, 0.0, "ellipsoid"))
        prev = (lam1, cur) if cur is not None else None

    # hard case of pattern (+, 0): singular H at a pole with consistent rhs
    for p in poles:
        H = Q + p * M
        rhs = -b / 2.0 + p * M @ m
        s, *_ = np.linalg.lstsq(H, rhs, rcond=1e-10)
        if np.linalg.norm(H @ s - rhs) > 1e-8 * max(1.0, np.linalg.norm(rhs)):
            continue
        ev, EV = np.linalg.eigh(H)
        # the null space can be several-dimensional (e.g. Q and M sharing a
        # kernel); walk along every direction of it that M can see
        null = EV[:, np.abs(ev) <= max(np.abs(ev).min(), 1e-10 * scale)]
        mu_n, Y = np.linalg.eigh(null.T @ M @ null)
        ds = s - m
        for y in Y.T[mu_n > 1e-14]:
            z = null @ y
            # g1(s + t z) = 0 is a quadratic in t
            qa, qb, qc = z @ M @ z, 2 * z @ M @ ds, ds @ M @ ds - R.r1
            disc = qb * qb - 4 * qa * qc
            if disc < 0:
                continue
            for t in ((-qb + np.sqrt(disc)) / (2 * qa), (-qb - np.sqrt(disc)) / (2 * qa)):
                cands.append((s + t * z, p, 0.0, "ellipsoid:hard"))

    # (+, +): both active. For each lambda1 the sphere-stationary points are
    # exact; they are traced in lambda1 by continuity (tags can swap at
    # hard-case crossings) with adaptive refinement around folds.
    def branches(lam1):
        H = Q + lam1 * M
        g = b - 2.0 * lam1 * M @ m
        return [(s, lam2, R.g1(s)) for s, lam2, _ in sphere_stationary_points(H, g, R.r2)]

    step_tol = 0.25 * np.sqrt(R.r2)

    def nearest(pt, pts):
        dists = [np.linalg.norm(p[0] - pt[0]) for p in pts]
        k = int(np.argmin(dists))
        return pts[k], dists[k]

    def add(lam1, pt, tag):
        if pt[1] >= -1e-12 * scale:
            cands.append((pt[0], lam1, max(pt[1], 0.0), tag))

    def track(la, a, lb, b):
        # coarse bisection; the Newton polish in cdt_solve finishes the job
        for _ in range(60):
            if lb - la <= 1e-10 * max(1.0, lb):
                break
            mid = 0.5 * (la + lb)
            if not la < mid < lb:
                break
            pts = branches(mid)
            if not pts:
                break
            c = min(pts, key=lambda p: min(np.linalg.norm(p[0] - a[0]), np.linalg.norm(p[0] - b[0])))
            if (c[2] > 0) == (a[2] > 0):
                la, a = mid, c
            else:
                lb, b = mid, c
        add(la, a, "both")
        add(lb, b, "both")

    def scan(la, A, lb, B, depth):
        matched = len(A) == len(B)
        pairs = []
        if matched:
            used = set()
            for a in A:
                bb, dist = nearest(a, B)
                k = next(i for i, p in enumerate(B) if p is bb)
                if dist > step_tol or k in used:
                    matched = False
                    break
                used.add(k)
                pairs.append((a, bb))
        if not matched:
            mid = np.sqrt(la * lb) if la > 0 and lb / la > 2.0 else 0.5 * (la + lb)
            if depth < 48 and la < mid < lb and lb - la > 1e-8 * max(1.0, lb):
                Bm = branches(mid)
                scan(la, A, mid, Bm, depth + 1)
                scan(mid, Bm, lb, B, depth + 1)
                return
            # unresolved fold: neighbouring points seed the Newton polish
            for lam1, pts in ((la, A), (lb, B)):
                for p in pts:
                    if abs(p[2]) <= 1e-2 * max(1.0, R.r1):
                        add(lam1, p, "both:fold")
            return
        for a, bb in pairs:
            if (a[2] > 0) != (bb[2] > 0):
                track(la, a, lb, bb)

    prev_lam, prev_br = None, None
    for lam1 in grid:
        cur = branches(lam1)
        if prev_br is not None:
            scan(prev_lam, prev_br, lam1, cur, 0)
        for p in cur:
            if abs(p[2]) <= 1e-12 * max(1.0, R.r1):
                add(lam1, p, "both")
        prev_lam, prev_br = lam1, cur
    return cands


def _kkt(R: _Reduced, s, lam1, lam2, pattern, n_cands):
    g1, g2 = R.g1(s), float(s @ s - R.r2)
    base = 2 * R.Q @ s + R.b
    cols = np.column_stack([2 * R.M @ (s - R.m), 2 * s])
    scale = max(1.0, np.linalg.norm(R.b), np.abs(R.Q).max())

    def residual(l1, l2):
        return float(np.linalg.norm(base + cols @ [l1, l2]) / scale)

    # refit the multipliers of the active constraints if that improves the certificate
    active = [abs(g1) <= 1e-9 * max(1.0, R.r1), abs(g2) <= 1e-9 * max(1.0, R.r2)]
    if any(active):
        fit = np.zeros(2)
        fit[active], _ = optimize.nnls(cols[:, active], -base)
        if residual(*fit) < residual(lam1, lam2):
            lam1, lam2 = fit
    return KKTReport(
        lambda1=float(lam1), lambda2=float(lam2),
        stationarity=residual(lam1, lam2),
        violation1=max(0.0, g1), violation2=max(0.0, g2),
        slackness1=float(abs(lam1 * g1)), slackness2=float(abs(lam2 * g2)),
        pattern=pattern, n_candidates=n_cands,
    )


def _polish(R: _Reduced, s, lam1, lam2, pattern):
    """A few Newton steps on the active KKT system to reach machine precision."""
    act1 = bool(lam1 > 0 or pattern.startswith(("ellipsoid", "both")))
    act2 = bool(lam2 > 0 or pattern.startswith(("ball", "both")))
    if not (act1 or act2):
        return s, lam1, lam2
    d = len(s)
    x = np.concatenate([s, [lam1] if act1 else [], [lam2] if act2 else []])

    def unpack(x):
        s = x[:d]
        k = d
        l1 = x[k] if act1 else 0.0
        k += act1
        l2 = x[k] if act2 else 0.0
        return s, l1, l2

    def F(x):
        s, l1, l2 = unpack(x)
        eqs = [2 * R.Q @ s + R.b + 2 * l1 * R.M @ (s - R.m) + 2 * l2 * s]
        if act1:
            eqs.append([R.g1(s)])
        if act2:
            eqs.append([s @ s - R.r2])
        return np.concatenate(eqs)

    def J(x):
        s, l1, l2 = unpack(x)
        rows = []
        top = [2 * (R.Q + l1 * R.M + l2 * np.eye(d))]
        if act1:
            top.append((2 * R.M @ (s - R.m))[:, None])
        if act2:
            top.append((2 * s)[:, None])
        rows.append(np.hstack(top))
        if act1:
            rows.append(np.concatenate([2 * R.M @ (s - R.m), np.zeros(act1 + act2)])[None, :])
        if act2:
            rows.append(np.concatenate([2 * s, np.zeros(act1 + act2)])[None, :])
        return np.vstack(rows)

    f0 = np.linalg.norm(F(x))
    for _ in range(4):
        try:
            step = np.linalg.solve(J(x), -F(x))
        except np.linalg.LinAlgError:
            break
        x_new = x + step
        f_new = np.linalg.norm(F(x_new))
        if not np.isfinite(f_new) or f_new >= f0:
            break
        x, f0 = x_new, f_new
    s, l1, l2 = unpack(x)
    if l1 < 0 or l2 < 0:
        return unpack(np.concatenate([s, [lam1] if act1 else [], [lam2] if act2 else []]))
    return s, l1, l2


def cdt_solve(problem: CdtProblem, tol: float = 1e-9, grid_size: int = 64):
    """Globally minimize a quadratic over two ellipsoids.

    Returns ``(w, value, report)`` where ``report`` is a :class:`KKTReport` for
    the returned point.
    """
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    R = _reduce(problem)
    if R.r2 < 0:
        raise InfeasibleError("second ellipsoid has negative radius")
    # feasibility: min of g1 over the ball is a convex trust-region problem
    s_feas, _ = _ball_trs(R.M, -2.0 * R.M @ R.m, R.r2)
    if R.g1(s_feas) > tol:
        raise InfeasibleError(f"constraint sets are disjoint (min residual {R.g1(s_feas):.3g})")

    raw = _candidates(R, grid_size)
    raw.append((s_feas, 0.0, 0.0, "fallback"))
    raw.append((np.zeros_like(R.b), 0.0, 0.0, "fallback"))
    raw.append((R.m.copy(), 0.0, 0.0, "fallback"))

    n_cands = len(raw)
    scored = []
    for s, lam1, lam2, pattern in raw:
        if not np.all(np.isfinite(s)):
            continue
        if not pattern.startswith("fallback"):
            s, lam1, lam2 = _polish(R, s, lam1, lam2, pattern)
        viol = max(R.g1(s), s @ s - R.r2)
        if viol > tol:
            continue
        scored.append((R.value(s), lam1, lam2, s, pattern))
    if not scored:
        raise InfeasibleError("no feasible KKT candidate found")
    scored.sort(key=lambda t: (round(t[0], 12), t[1], t[2]))
    value, lam1, lam2, s, pattern = scored[0]
    report = _kkt(R, s, lam1, lam2, pattern, n_cands)
    w = R.lift(s)
    if report.stationarity > 10 * tol and pattern.startswith("fallback"):
        raise NumericError("multiplier search found no KKT point meeting tolerance",
                           {"incumbent": w, "value": value, "report": report})
    return w, problem.objective(w), report


def cdt_solve_approx(problem: CdtProblem, eps: float, grid_size: int = 64):
    """Solve with both radii tightened by ``eps``; the result is feasible for the original."""
    if eps <= 0:
        raise InvalidInputError("eps must be positive")
    if eps >= problem.constraint1.radius2 or eps >= problem.constraint2.radius2:
        raise InvalidInputError("eps must be smaller than both constraint radii")
    w, _, report = cdt_solve(problem.tightened(eps), tol=eps, grid_size=grid_size)
    return w
