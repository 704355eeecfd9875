"""Seeded invariant checks shared by the ``selftest`` command and the property tests.

Each check draws a small random instance from ``rng`` and raises
``AssertionError`` when an invariant fails.
"""
from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from .cdt import CdtProblem, Ellipsoid, cdt_solve
from .core import LabeledDataset, abstention_loss
from .hypothesis import FiniteClass, Threshold, ThresholdFamily, erm_weighted, weighted_loss
from .maximizers import brute_force_maximize_classification, brute_force_minimize_cdt, flip_maximize
from .mma import FLIP, grid_search_min, mma
from .shift import DiscreteDistribution, best_k_bound, dk_divergence, dk_parts, tv_distance


def random_finite_class(rng, domain_size: int = 6, size: int = 12) -> FiniteClass:
    rows = np.unique(rng.integers(0, 2, size=(size, domain_size)), axis=0)
    return FiniteClass(np.arange(domain_size, dtype=float), rows)


def random_instance(rng, n: int, domain_size: int = 6, size: int = 12):
    """(class, train, test, h) with a realizable training set labeled by a random member."""
    cls = random_finite_class(rng, domain_size, size)
    target = cls.member(int(rng.integers(len(cls))))
    xbar = rng.integers(0, domain_size, size=(int(rng.integers(0, 4)), 1)).astype(float)
    train = LabeledDataset(xbar.reshape(-1, 1), target.predict(xbar) if len(xbar) else np.zeros(0))
    h = erm_weighted(cls, train)
    test = rng.integers(0, domain_size, size=(n, 1)).astype(float)
    return cls, train, test, h


def check_flip_near_optimal(rng):
    n = int(rng.integers(1, 9))
    cls, train, test, h = random_instance(rng, n)
    c = float(rng.uniform(0.05, 0.95))
    a = rng.uniform(size=n)
    g = flip_maximize(cls, train, test, h, a)
    assert np.all(g.predict(train.points) == train.labels) if len(train) else True
    got = abstention_loss(g.predict(test) != h.predict(test), a, c)
    _, best = brute_force_maximize_classification(cls, train, test, h, a, c)
    assert got >= best - 1.0 / (3 * n) - 1e-12, (got, best)


def check_mma_certificate(rng):
    n = int(rng.integers(1, 4))
    cls, train, test, h = random_instance(rng, n)
    c = float(rng.uniform(0.05, 0.95))
    res = mma(train, test, h, c, FLIP, cls=cls)
    _, worst = brute_force_maximize_classification(cls, train, test, h, res.a, c)
    assert worst <= res.certified_bound + 1e-12, (worst, res.certified_bound)
    members = cls.consistent(train)
    losses = cls.table[np.ix_(members, cls.domain_index(test))] != h.predict(test)[None, :]
    _, opt = grid_search_min(n, c, loss_vectors=losses.astype(float))
    assert res.certified_bound <= opt + 1.0 / n + 1e-9, (res.certified_bound, opt)


def check_cdt_matches_sampling(rng):
    d = 2
    A = rng.normal(size=(d, d))
    B = rng.normal(size=(d, d))
    problem = CdtProblem(0.5 * (A + A.T), rng.normal(size=d), 0.0,
                         Ellipsoid(B @ B.T + 0.1 * np.eye(d), rng.uniform(-0.3, 0.3, size=d), 0.5),
                         Ellipsoid.ball(np.zeros(d), 1.0))
    _, value, _ = cdt_solve(problem)
    _, ref = brute_force_minimize_cdt(problem, seed=int(rng.integers(2**31)), samples=20_000, restarts=16)
    assert value <= ref + 1e-7, (value, ref)


def _random_pair(rng, m: int = 6):
    support = np.arange(m, dtype=float)
    p = rng.dirichlet(np.ones(m)) * (rng.uniform(size=m) < 0.8)
    p = p if p.sum() > 0 else np.ones(m)
    q = rng.dirichlet(np.ones(m))
    return DiscreteDistribution.normalized(support, p), DiscreteDistribution(support, q)


def check_divergences(rng):
    P, Q = _random_pair(rng)
    assert abs(dk_divergence(P, Q, 1.0) - tv_distance(P, Q)) <= 1e-12
    ks = np.sort(rng.uniform(1, 5, size=4))
    vals = [dk_divergence(P, Q, k) for k in ks]
    assert all(x >= y - 1e-15 for x, y in zip(vals, vals[1:]))
    base = float(rng.uniform(0, 0.2))
    c = float(rng.uniform(0.05, 0.95))
    k, value = best_k_bound(P, Q, c, base)
    assert value <= c * tv_distance(P, Q) + base + 1e-12
    for kk in np.r_[1.0, ks]:
        assert value <= c * dk_divergence(P, Q, kk) + kk * base + 1e-12


def check_dk_mass_balance(rng):
    """Copied mass plus fallback mass reproduces P exactly."""
    P, Q = _random_pair(rng)
    k = float(rng.uniform(1, 4))
    alpha, beta, mu = dk_parts(P.pmf, Q.pmf, k)
    rebuilt = Q.pmf * (1 - alpha) / k + beta * mu
    assert np.allclose(rebuilt, P.pmf, atol=1e-12), (rebuilt, P.pmf)
    assert abs(np.sum(Q.pmf * alpha) - dk_divergence(P, Q, k)) <= 1e-12


def check_affine_loss(rng):
    """The abstention loss is affine in a: it matches its interpolation exactly."""
    n = int(rng.integers(1, 12))
    losses = rng.uniform(size=n)
    c = float(rng.uniform(0.05, 0.95))
    a0, a1 = rng.uniform(size=n), rng.uniform(size=n)
    t = float(rng.uniform())
    mixed = abstention_loss(losses, (1 - t) * a0 + t * a1, c)
    assert abs(mixed - ((1 - t) * abstention_loss(losses, a0, c) + t * abstention_loss(losses, a1, c))) <= 1e-12
    assert abs(abstention_loss(losses, np.ones(n), c) - c) <= 1e-12


def check_erm_determinism(rng):
    """Weighted ERM is deterministic and no member (or threshold cut) does better."""
    cls = random_finite_class(rng)
    m = len(cls.domain)
    k = int(rng.integers(1, 10))
    data = LabeledDataset(cls.domain[rng.integers(0, m, size=k)], rng.integers(0, 2, size=k).astype(float),
                          rng.integers(1, 5, size=k).astype(float))
    g = erm_weighted(cls, data)
    assert g == erm_weighted(cls, data)
    assert weighted_loss(g, data) <= cls.weighted_losses(data).min() + 1e-12
    for fam in (ThresholdFamily(), ThresholdFamily(two_sided=True)):
        t = erm_weighted(fam, data)
        assert t == erm_weighted(fam, data)
        best = min(weighted_loss(Threshold(cut, o), data) for cut in fam.cut_candidates(data.points[:, 0])
                   for o in fam.orientations)
        assert weighted_loss(t, data) <= best + 1e-12


def check_kkt_residuals(rng):
    d = int(rng.integers(1, 4))
    A = rng.normal(size=(d, d))
    B = rng.normal(size=(d, d))
    problem = CdtProblem(0.5 * (A + A.T), rng.normal(size=d), float(rng.normal()),
                         Ellipsoid(B @ B.T, rng.uniform(-0.5, 0.5, size=d), float(rng.uniform(0.3, 2.0))),
                         Ellipsoid.ball(np.zeros(d), 1.0))
    _, _, report = cdt_solve(problem)
    assert report.max_residual() <= 1e-7, report


def check_dk_piecewise_linear(rng):
    """D_k is linear between consecutive likelihood ratios."""
    P, Q = _random_pair(rng)
    live = P.pmf > 0
    kinks = np.unique(np.r_[1.0, (Q.pmf[live] / P.pmf[live])])
    kinks = kinks[kinks >= 1.0]
    for lo, hi in zip(kinks, kinks[1:]):
        mid = 0.5 * (lo + hi)
        interp = 0.5 * (dk_divergence(P, Q, lo) + dk_divergence(P, Q, hi))
        assert abs(dk_divergence(P, Q, mid) - interp) <= 1e-12


def check_incumbent_monotone(rng):
    n = int(rng.integers(2, 10))
    cls, train, test, h = random_instance(rng, n)
    res = mma(train, test, h, float(rng.uniform(0.05, 0.95)), FLIP, cls=cls, early_stop=False)
    traj = res.diagnostics["trajectory"]
    assert all(i0 < i1 and v1 < v0 for (i0, v0), (i1, v1) in zip(traj, traj[1:])), traj
    assert abs(traj[-1][1] - res.witness_value) <= 1e-12
    assert res.diagnostics["lower_bound"] <= res.certified_bound + 1e-12


def check_report_determinism(rng):
    from .harness import ExperimentConfig, emit_report, run_experiment

    cfg = ExperimentConfig(kind="classification_shift", n=20, trials=3, domain_size=20,
                           seed=int(rng.integers(2**63)), scenario="shift")
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for run in range(2):
            paths = emit_report(run_experiment(cfg), Path(tmp) / str(run))
            blobs.append((paths["trials"].read_bytes(), paths["summary"].read_bytes()))
    assert blobs[0] == blobs[1]


CHECKS = {
    "affine_loss": check_affine_loss,
    "erm_determinism": check_erm_determinism,
    "kkt_residuals": check_kkt_residuals,
    "dk_piecewise_linear": check_dk_piecewise_linear,
    "incumbent_monotone": check_incumbent_monotone,
    "report_determinism": check_report_determinism,
    "flip_near_optimal": check_flip_near_optimal,
    "mma_certificate": check_mma_certificate,
    "cdt_matches_sampling": check_cdt_matches_sampling,
    "divergences": check_divergences,
    "dk_mass_balance": check_dk_mass_balance,
}


def run_selftest(seed: int = 0, trials: int = 20, echo=print) -> list[str]:
    """Run every check ``trials`` times; return the names of failing checks."""
    failures = []
    for tag, (name, check) in enumerate(CHECKS.items()):
        streams = np.random.SeedSequence([seed, tag]).spawn(trials)
        rngs = [np.random.Generator(np.random.Philox(s)) for s in streams]
        try:
            for rng in rngs:
                check(rng)
        except AssertionError as err:
            failures.append(name)
            echo(f"FAIL {name}: {err}")
        else:
            echo(f"ok   {name} ({trials} instances)")
    return failures
