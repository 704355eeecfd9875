"""Monte-Carlo experiments checking the guarantees at desk scale.

Every trial is a pure function of the configuration and its own 64-bit seed,
so trials can run in any order or in parallel and the report is reproducible.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..bounds import classification_bound_expected, classification_bound_highprob, generalization_bound
from ..bounds import generalize_abstainer, pq_metrics
from ..core import InvalidInputError, LabeledDataset, abstention_loss
from ..hypothesis import (
    LE_ZERO,
    FiniteClass,
    Linear,
    LinearClass,
    Threshold,
    ThresholdFamily,
    erm_weighted,
    vc_dimension,
)
from ..maximizers import classification_losses, regression_losses
from ..mma import CUTTING_PLANE, ELLIPSOID, FLIP, mma
from ..regression import build_version_space, regression_pipeline, vs_radius
from ..shift import DiscreteDistribution, Resample, Targeted, corrupt, sample_iid, tv_distance
from .config import ExperimentConfig, load_class, load_distribution, trial_rng, trial_seeds

# fixed offset so scenario construction never shares a stream with the trials
_SCENARIO_STREAM = 0x5CE7A510


@dataclass(frozen=True, eq=False)
class Setup:
    cls: object
    P: DiscreteDistribution
    Q: DiscreteDistribution
    target: object
    vc_dim: int
    blind_spot: np.ndarray  # support points of Q outside the support of P


def _grid(m: int) -> np.ndarray:
    return np.round((np.arange(m) + 0.5) / m, 9)


def _classification_scenario(cfg: ExperimentConfig, cls):
    if isinstance(cls, FiniteClass):
        domain = cls.domain
        uniform = DiscreteDistribution.uniform(domain)
        return uniform, uniform
    domain = _grid(cfg.domain_size)
    if cfg.scenario == "same":
        P = DiscreteDistribution.uniform(domain)
        return P, P
    if cfg.scenario == "shift":
        # P has no mass on a band around the target cut; Q puts shift_tv there
        band = np.abs(domain - 0.5) < 0.1
        P = DiscreteDistribution.uniform(domain[~band])
        q = np.r_[(1 - cfg.shift_tv) / (~band).sum() * np.ones((~band).sum()),
                  cfg.shift_tv / band.sum() * np.ones(band.sum())]
        return P, DiscreteDistribution.normalized(np.r_[domain[~band], domain[band]], q)
    if cfg.scenario == "half":
        # Q uniform on the left half: Q <= 2P, so D_2(P||Q) = 0 while TV = 1/2
        P = DiscreteDistribution.uniform(domain)
        return P, DiscreteDistribution.uniform(domain[domain < 0.5])
    raise InvalidInputError(f"unknown classification scenario {cfg.scenario!r}")


def _ball_points(rng, m: int, d: int) -> np.ndarray:
    u = rng.normal(size=(m, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return np.round(u * rng.uniform(0.2, 1.0, size=(m, 1)), 9)


def _regression_scenario(cfg: ExperimentConfig, d: int):
    rng = trial_rng(cfg.seed ^ _SCENARIO_STREAM)
    m = cfg.support_size
    if cfg.scenario == "same":
        P = DiscreteDistribution.uniform(_ball_points(rng, m, d))
        return P, P
    if cfg.scenario == "shift":
        base = _ball_points(rng, m, d)
        extra = _ball_points(rng, max(1, m // 2), d)
        q = np.r_[np.full(m, (1 - cfg.shift_tv) / m), np.full(len(extra), cfg.shift_tv / len(extra))]
        return DiscreteDistribution.uniform(base), DiscreteDistribution.normalized(np.vstack([base, extra]), q)
    if cfg.scenario == "blind_spot":
        if d < 2:
            raise InvalidInputError("the blind-spot scenario needs d >= 2")
        # P lives on the first axis, Q on the second, far enough out that the
        # unconstrained second coordinate can cost more than c
        half = max(2, m // 2)
        t_p = np.round(np.linspace(0.2, 1.0, half), 9)
        t_q = np.round(np.linspace(0.6, 1.0, half), 9)
        axis = np.eye(d)
        P = DiscreteDistribution.uniform(np.r_[t_p, -t_p][:, None] * axis[0])
        return P, DiscreteDistribution.uniform(np.r_[t_q, -t_q][:, None] * axis[1])
    raise InvalidInputError(f"unknown regression scenario {cfg.scenario!r}")


def _target(cfg: ExperimentConfig, cls, d: int):
    spec = cfg.target or {}
    if isinstance(cls, ThresholdFamily):
        return Threshold(float(spec.get("cut", 0.5)), spec.get("orientation", LE_ZERO))
    if isinstance(cls, FiniteClass):
        return cls.member(int(spec.get("index", 0)))
    if "w" in spec:
        return Linear(np.asarray(spec["w"], dtype=float))
    if cfg.scenario == "blind_spot":
        return Linear(0.5 * np.eye(d)[0])
    rng = trial_rng(cfg.seed ^ _SCENARIO_STREAM ^ 1)
    w = rng.normal(size=d)
    return Linear(0.8 * w / np.linalg.norm(w))


@lru_cache(maxsize=16)
def _setup_cached(doc: str, base: str | None) -> Setup:
    cfg = ExperimentConfig.from_dict(json.loads(doc))
    cls = load_class(cfg.hypothesis, base)
    if isinstance(cls, LinearClass):
        d = cls.dim
        P, Q = _regression_scenario(cfg, d)
        vc = d
    else:
        P, Q = _classification_scenario(cfg, cls)
        d = 1
        vc = int(cfg.hypothesis.get("vc_dim", 0)) or vc_dimension(cls)
    P = load_distribution(cfg.P, base) or P
    Q = load_distribution(cfg.Q, base) or Q
    p_keys = {tuple(x) for x, px in zip(P.support, P.pmf) if px > 0}
    blind = np.array([x for x, qx in zip(Q.support, Q.pmf) if qx > 0 and tuple(x) not in p_keys])
    return Setup(cls, P, Q, _target(cfg, cls, d), vc, blind.reshape(-1, P.dim))


def setup_for(cfg: ExperimentConfig) -> Setup:
    base = getattr(cfg, "_base", None)
    return _setup_cached(json.dumps(cfg.to_dict(), sort_keys=True), None if base is None else str(base))


def _in_set(points, members) -> np.ndarray:
    keys = {tuple(p) for p in members}
    return np.array([tuple(p) in keys for p in points], dtype=bool)


def _method(cfg, default):
    return cfg.method or default


# ---------------------------------------------------------------------------
# trials


def classification_trial(cfg: ExperimentConfig, seed: int) -> dict:
    s = setup_for(cfg)
    rng = trial_rng(seed)
    xbar = sample_iid(s.P, cfg.n, rng)
    train = LabeledDataset(xbar, s.target.predict(xbar))
    h = erm_weighted(s.cls, train)
    x = sample_iid(s.Q, cfg.n, rng)
    res = mma(train, x, h, cfg.c, FLIP, cls=s.cls, method=_method(cfg, ELLIPSOID))
    losses = classification_losses(s.target, h, x)
    blind = _in_set(x, s.blind_spot)
    return {
        "seed": seed,
        "realized_loss": abstention_loss(losses, res.a, cfg.c),
        "certified_bound": res.certified_bound,
        "abstain_mass": float(res.a.mean()),
        "uncovered_error": float(np.mean((1 - res.a) * losses)),
        "oracle_calls": int(res.diagnostics["oracle_calls"]),
        "membership": True,
        "blind_spot_points": int(blind.sum()),
        "blind_spot_abstain": float(res.a[blind].mean()) if blind.any() else float("nan"),
    }


def _targeted_points(s: Setup, count: int) -> np.ndarray:
    """Blind-spot points nearest the target's decision boundary, cycled.

    Without a blind spot the adversary falls back to the support points of P
    nearest the boundary.
    """
    pool = s.blind_spot if len(s.blind_spot) else s.P.support
    if isinstance(s.target, Threshold):
        pool = pool[np.argsort(np.abs(pool[:, 0] - s.target.cut), kind="stable")]
    pts = pool[:2]
    return pts[np.arange(count) % len(pts)]


def adversarial_trial(cfg: ExperimentConfig, seed: int) -> dict:
    s = setup_for(cfg)
    rng = trial_rng(seed)
    xbar = sample_iid(s.P, cfg.n, rng)
    train = LabeledDataset(xbar, s.target.predict(xbar))
    h = erm_weighted(s.cls, train)
    z = sample_iid(s.P, cfg.n, rng)
    budget = int(math.floor(cfg.gamma * cfg.n + 1e-12))
    policy = Targeted(_targeted_points(s, budget)) if cfg.policy == "targeted" else Resample(s.Q)
    x, modified = corrupt(z, cfg.gamma, policy, rng)
    res = mma(train, x, h, cfg.c, FLIP, cls=s.cls, method=_method(cfg, ELLIPSOID))
    losses = classification_losses(s.target, h, x)
    realized = abstention_loss(losses, res.a, cfg.c)
    delta = cfg.delta if cfg.delta is not None else 0.05
    bound = cfg.c * len(modified) / cfg.n + classification_bound_highprob(s.vc_dim, cfg.n, delta).post_mma
    return {
        "seed": seed,
        "realized_loss": realized,
        "certified_bound": res.certified_bound,
        "abstain_mass": float(res.a.mean()),
        "uncovered_error": float(np.mean((1 - res.a) * losses)),
        "oracle_calls": int(res.diagnostics["oracle_calls"]),
        "membership": True,
        "modified": int(len(modified)),
        "trial_bound": bound,
        "violated": bool(realized > bound),
    }


def regression_trial(cfg: ExperimentConfig, seed: int) -> dict:
    s = setup_for(cfg)
    rng = trial_rng(seed)
    n = cfg.n
    delta = cfg.delta if cfg.delta is not None else 1.0 / n
    xbar = sample_iid(s.P, n, rng)
    clean = s.target.predict(xbar) + rng.uniform(-cfg.noise, cfg.noise, size=n)
    y = np.clip(clean, -1.0, 1.0)
    train = LabeledDataset(xbar, y)
    h, vs = build_version_space(train, delta)
    eps = vs.radius
    membership = vs.contains(s.target)
    # fresh natural sample: worst case over the version space without abstaining
    zfresh = sample_iid(s.P, n, rng)
    _, fresh_worst = vs.worst_case(zfresh)
    record = {
        "seed": seed,
        "membership": bool(membership),
        "train_discrepancy": float(np.mean((s.target.predict(xbar) - h.predict(xbar)) ** 2)),
        "radius": eps,
        "fresh_worst_loss": fresh_worst,
        "rad_ok": bool(fresh_worst <= 14 * eps),
        "clamped": float(np.mean(clean != y)),
    }
    if cfg.pipeline:
        x = sample_iid(s.Q, n, rng)
        res = regression_pipeline(train, x, cfg.c, delta, method=_method(cfg, CUTTING_PLANE))
        losses = regression_losses(s.target, h, x)
        blind = _in_set(x, s.blind_spot)
        record.update({
            "realized_loss": abstention_loss(losses, res.a, cfg.c),
            "certified_bound": res.certified_bound,
            "abstain_mass": float(res.a.mean()),
            "uncovered_error": float(np.mean((1 - res.a) * losses)),
            "oracle_calls": int(res.mma.diagnostics["oracle_calls"]),
            "oracle_failures": int(res.mma.diagnostics["oracle_failures"]),
            "blind_spot_points": int(blind.sum()),
            "blind_spot_abstain": float(res.a[blind].mean()) if blind.any() else float("nan"),
        })
    return record


def generalization_trial(cfg: ExperimentConfig, seed: int) -> dict:
    s = setup_for(cfg)
    rng = trial_rng(seed)
    n = cfg.n
    xbar = sample_iid(s.P, n, rng)
    train = LabeledDataset(xbar, s.target.predict(xbar))
    h = erm_weighted(s.cls, train)
    rest = sample_iid(s.Q, n - 1, rng)
    method = _method(cfg, ELLIPSOID)
    union = np.unique(np.vstack([s.P.support, s.Q.support]), axis=0)
    order = rng.permutation(len(rest))
    alpha = np.array([generalize_abstainer(train, rest[order], h, cfg.c, xp, cls=s.cls, method=method)
                      for xp in union])
    lookup = {tuple(p): a for p, a in zip(union, alpha)}

    def abstainer(points):
        return np.array([lookup[tuple(p)] for p in np.asarray(points).reshape(len(points), -1)])

    err = classification_losses(s.target, h, union)
    q = s.Q.prob_of(union)
    gen_loss = float(np.sum(q * (alpha * cfg.c + (1 - alpha) * err)))
    # transductive view: a fresh first test point, loss on that coordinate
    first = sample_iid(s.Q, 1, rng)
    a1 = lookup[tuple(first[0])]
    first_err = float(classification_losses(s.target, h, first)[0])
    eps1, eps2 = pq_metrics(s.Q, s.P, h, s.target, abstainer)
    return {
        "seed": seed,
        "generalization_loss": gen_loss,
        "transductive_first_loss": a1 * cfg.c + (1 - a1) * first_err,
        "abstain_mass_Q": float(np.sum(q * alpha)),
        "eps1": eps1,
        "eps2": eps2,
        "membership": True,
    }


TRIALS = {
    "classification_shift": classification_trial,
    "adversarial": adversarial_trial,
    "regression": regression_trial,
    "generalization": generalization_trial,
    "pq_metrics": generalization_trial,
}


def _timed(args):
    fn, cfg_doc, base, seed = args
    cfg = ExperimentConfig.from_dict(cfg_doc)
    if base is not None:
        cfg._base = base
    t0 = time.perf_counter()
    rec = fn(cfg, seed)
    return rec, time.perf_counter() - t0


def run_trials(cfg: ExperimentConfig, jobs: int = 1):
    """Records in trial order and the matching wall times."""
    fn = TRIALS[cfg.kind]
    seeds = trial_seeds(cfg.seed, cfg.trials)
    base = getattr(cfg, "_base", None)
    work = [(fn, cfg.to_dict(), base, s) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_timed, work))
    else:
        out = [_timed(w) for w in work]
    return [r for r, _ in out], [t for _, t in out]


# ---------------------------------------------------------------------------
# summaries


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    if len(v) == 0:
        return float("nan"), float("nan")
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return float(v.mean()), se


def _check(name, value, limit, ok):
    return {"name": name, "value": value, "limit": limit, "passed": bool(ok)}


def summarize(cfg: ExperimentConfig, records: list[dict]) -> dict:
    """Means, bound values and pass/fail checks for one experiment."""
    s = setup_for(cfg)
    n, c = cfg.n, cfg.c
    tv = tv_distance(s.P, s.Q)
    out = {"kind": cfg.kind, "trials": len(records), "tv": tv}
    checks = []
    if not records:
        out["checks"] = checks
        return out
    if "realized_loss" in records[0]:
        mean, se = _mean_se([r["realized_loss"] for r in records])
        out.update(mean_loss=mean, se_loss=se)
        # the bound is only claimed on the membership event with a converged oracle
        unsound = sum(1 for r in records if r["membership"] and not r.get("oracle_failures", 0)
                      and r["realized_loss"] > r["certified_bound"] + 1e-9)
        out["soundness_violations"] = unsound
        checks.append(_check("realized loss <= certified bound", unsound, 0, unsound == 0))
    if cfg.kind == "classification_shift":
        gen = classification_bound_expected(s.vc_dim, n)
        bound = c * tv + gen.with_slack
        k, tight = generalization_bound(s.P, s.Q, c, s.vc_dim, n)
        out.update(bound=bound, generalization_term=gen.with_slack, min_k=k, min_k_bound=tight)
        checks.append(_check("mean loss <= c TV + 2d lg(3n)/n + 3se", out["mean_loss"], bound + 3 * se,
                             out["mean_loss"] <= bound + 3 * se))
    elif cfg.kind == "adversarial":
        delta = cfg.delta if cfg.delta is not None else 0.05
        rate = float(np.mean([r["violated"] for r in records]))
        # binomial standard error at the nominal rate
        se_rate = math.sqrt(delta * (1 - delta) / len(records))
        out.update(violation_rate=rate, delta=delta, se_rate=se_rate,
                   mean_modified=float(np.mean([r["modified"] for r in records])),
                   highprob_term=classification_bound_highprob(s.vc_dim, n, delta).post_mma)
        checks.append(_check("violation rate <= delta + 3se", rate, delta + 3 * se_rate, rate <= delta + 3 * se_rate))
    elif cfg.kind == "regression":
        delta = cfg.delta if cfg.delta is not None else 1.0 / n
        eps = vs_radius(n, delta)
        member = float(np.mean([r["membership"] for r in records]))
        rad = float(np.mean([r["rad_ok"] for r in records]))
        se_m = math.sqrt(max(delta * (1 - delta), 1e-12) / len(records))
        out.update(radius=eps, membership_rate=member, rad_rate=rad, delta=delta,
                   clamp_rate=float(np.mean([r["clamped"] for r in records])))
        floor = 1 - delta - 3 * se_m
        checks.append(_check("membership rate >= 1 - delta - 3se", member, floor, member >= floor))
        checks.append(_check("fresh worst-case loss <= 14 eps rate >= 1 - delta - 3se", rad, floor, rad >= floor))
        if "mean_loss" in out:
            out["oracle_failures"] = int(sum(r["oracle_failures"] for r in records))
            bound = c * tv + 14 * eps + 1.0 / n
            out["bound"] = bound
            out["kappa_ratio"] = (out["mean_loss"] - c * tv) * math.sqrt(n) / math.log(n)
            checks.append(_check("mean loss <= c TV + 14 eps + 1/n + 3se", out["mean_loss"], bound + 3 * out["se_loss"],
                                 out["mean_loss"] <= bound + 3 * out["se_loss"]))
            if cfg.scenario == "blind_spot":
                mass, _ = _mean_se([r["blind_spot_abstain"] for r in records])
                out["blind_spot_abstain"] = mass
                checks.append(_check("blind-spot abstain mass >= 0.9", mass, 0.9, mass >= 0.9))
    elif cfg.kind in ("generalization", "pq_metrics"):
        gen, se_g = _mean_se([r["generalization_loss"] for r in records])
        tr, se_t = _mean_se([r["transductive_first_loss"] for r in records])
        k, bound = generalization_bound(s.P, s.Q, c, s.vc_dim, n)
        k1 = c * tv + classification_bound_expected(s.vc_dim, n).with_slack
        out.update(generalization_loss=gen, se_generalization=se_g, transductive_loss=tr, se_transductive=se_t,
                   min_k=k, min_k_bound=bound, k1_bound=k1,
                   eps1=_mean_se([r["eps1"] for r in records])[0], eps2=_mean_se([r["eps2"] for r in records])[0])
        if cfg.kind == "generalization":
            diff_se = math.hypot(se_g, se_t)
            checks.append(_check("|generalization - transductive| <= 3se", abs(gen - tr), 3 * diff_se,
                                 abs(gen - tr) <= 3 * diff_se + 1e-12))
            checks.append(_check("generalization loss <= min_k bound + 3se", gen, bound + 3 * se_g,
                                 gen <= bound + 3 * se_g))
            checks.append(_check("min_k bound <= k=1 bound", bound, k1, bound <= k1 + 1e-12))
    out["checks"] = checks
    out["passed"] = all(ch["passed"] for ch in checks)
    return out


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    seeds: list
    records: list
    wall_times: list
    summary: dict

    @property
    def passed(self) -> bool:
        return bool(self.summary.get("passed", True))


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    records, times = run_trials(cfg, jobs)
    return ExperimentReport(cfg, [r["seed"] for r in records], records, times, summarize(cfg, records))


def run_classification_shift(cfg, jobs=1):
    return run_experiment(cfg, jobs)


run_adversarial = run_regression = run_generalization = run_pq_metrics = run_classification_shift
