import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from abstention.core import InvalidInputError
from abstention.shift import (
    DiscreteDistribution,
    Resample,
    Targeted,
    align,
    best_k_bound,
    corrupt,
    dk_coupling,
    dk_divergence,
    dk_parts,
    sample_iid,
    tv_coupling,
    tv_distance,
)

seeds = st.integers(0, 2**32 - 1)

# uniform on [0, 1] against uniform on [0, 1/2], on a four-cell grid
WIDE = DiscreteDistribution.uniform([[1], [2], [3], [4]])
NARROW = DiscreteDistribution.uniform([[1], [2]])


def random_pair(rng, m=6):
    support = np.arange(m, dtype=float).reshape(-1, 1)
    p = rng.dirichlet(np.ones(m)) * (rng.uniform(size=m) < 0.8)
    q = rng.dirichlet(np.ones(m)) * (rng.uniform(size=m) < 0.8)
    p[0] = p[0] or 0.1
    q[1] = q[1] or 0.1
    return DiscreteDistribution.normalized(support, p), DiscreteDistribution.normalized(support, q)


def philox(seed):
    return np.random.Generator(np.random.Philox(seed))


def chi2_pvalue(indices, support_size, pmf):
    counts = np.bincount(indices, minlength=support_size)
    live = pmf > 0
    assert counts[~live].sum() == 0
    return stats.chisquare(counts[live], pmf[live] * len(indices)).pvalue


# distributions


def test_distribution_validation():
    with pytest.raises(InvalidInputError):
        DiscreteDistribution([[0], [1]], [0.5, 0.6])
    with pytest.raises(InvalidInputError):
        DiscreteDistribution([[0], [1]], [1.5, -0.5])
    with pytest.raises(InvalidInputError):
        DiscreteDistribution([[0], [0]], [0.5, 0.5])
    with pytest.raises(InvalidInputError):
        DiscreteDistribution([[0]], [0.5, 0.5])
    with pytest.raises(InvalidInputError):
        DiscreteDistribution.from_json({"pmf": [1.0]})


def test_distribution_json_roundtrip(tmp_path):
    D = DiscreteDistribution([[0.0, 1.0], [2.0, 3.0]], [0.25, 0.75])
    path = tmp_path / "d.json"
    path.write_text(json.dumps(D.to_json()))
    E = DiscreteDistribution.load(path)
    assert np.array_equal(E.support, D.support) and np.array_equal(E.pmf, D.pmf)
    assert E.prob_of([[2.0, 3.0], [9.0, 9.0]]).tolist() == [0.75, 0.0]


def test_align_extends_with_zeros():
    support, p, q = align(NARROW, WIDE)
    assert support[:, 0].tolist() == [1, 2, 3, 4]
    assert p.tolist() == [0.5, 0.5, 0, 0]
    assert q.tolist() == [0.25] * 4


# divergences


def test_tv_examples():
    assert tv_distance(WIDE, WIDE) == 0.0
    far = DiscreteDistribution.uniform([[7], [8]])
    assert tv_distance(WIDE, far) == 1.0
    assert tv_distance(WIDE, NARROW) == 0.5


def test_dk_examples():
    assert dk_divergence(WIDE, NARROW, 2) == 0.0
    assert dk_divergence(WIDE, NARROW, 1) == tv_distance(WIDE, NARROW)
    s, t = DiscreteDistribution([[0]], [1.0]), DiscreteDistribution([[1]], [1.0])
    for k in (1, 2.5, 100):
        assert dk_divergence(s, t, k) == 1.0
    with pytest.raises(InvalidInputError):
        dk_divergence(WIDE, NARROW, 0.5)


@given(seeds)
def test_dk_properties(seed):
    P, Q = random_pair(np.random.default_rng(seed))
    _, p, q = align(P, Q)
    assert abs(dk_divergence(P, Q, 1) - tv_distance(P, Q)) <= 1e-12
    ks = np.sort(np.random.default_rng(seed).uniform(1, 6, size=8))
    vals = [dk_divergence(P, Q, k) for k in ks]
    assert all(0 <= v <= 1 for v in vals)
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))
    # zero exactly when every ratio Q/P is at most k (positive/0 counts as infinite)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(q > 0, q / p, 0.0)
    for k in ks:
        assert (dk_divergence(P, Q, k) == 0) == bool(ratio.max() <= k)


def test_best_k_examples():
    c, eps = 0.6, 0.05
    k, value = best_k_bound(WIDE, NARROW, c, eps)
    assert k == 2.0 and abs(value - 2 * eps) <= 1e-12
    assert value < c / 2 + eps
    k, value = best_k_bound(WIDE, WIDE, c, 0.1)
    assert k == 1.0 and value == 0.1
    # with no base loss the best k is the largest ratio; only Q-mass off P's support remains
    P = DiscreteDistribution([[0], [1]], [0.9, 0.1])
    Q = DiscreteDistribution([[0], [1], [2]], [0.2, 0.5, 0.3])
    k, value = best_k_bound(P, Q, 0.5, 0.0)
    assert k == 5.0 and abs(value - 0.5 * 0.3) <= 1e-12


@given(seeds, st.floats(0, 0.5), st.floats(0.05, 1))
def test_best_k_beats_tv_and_every_k(seed, base, c):
    P, Q = random_pair(np.random.default_rng(seed))
    k, value = best_k_bound(P, Q, c, base)
    assert k >= 1
    assert value <= c * tv_distance(P, Q) + base + 1e-12
    for kk in np.linspace(1, 20, 40):
        assert value <= c * dk_divergence(P, Q, kk) + kk * base + 1e-12


# sampling and couplings


def test_sampling_basics():
    point = DiscreteDistribution([[3.0]], [1.0])
    assert np.all(sample_iid(point, 50, philox(0)) == 3.0)
    a, b = sample_iid(WIDE, 100, philox(9)), sample_iid(WIDE, 100, philox(9))
    assert np.array_equal(a, b)


def test_sampling_frequencies_within_four_sigma():
    rng = philox(2024)
    P, _ = random_pair(np.random.default_rng(5))
    n = 100_000
    x = sample_iid(P, n, rng)[:, 0].astype(int)
    freq = np.bincount(x, minlength=len(P.pmf)) / n
    sigma = np.sqrt(P.pmf * (1 - P.pmf) / n)
    assert np.all(np.abs(freq - P.pmf) <= 4 * sigma + 1e-15)


def test_tv_coupling_examples():
    s = tv_coupling(WIDE, WIDE, 1000, philox(1))
    assert np.array_equal(s.x_index, s.z_index) and not s.flags.any()
    far = DiscreteDistribution.uniform([[7], [8]])
    s = tv_coupling(far, WIDE, 1000, philox(1))
    assert s.flags.all()


def test_tv_coupling_discretized_pair():
    n = 100_000
    s = tv_coupling(WIDE, NARROW, n, philox(77))
    support, p, q = align(WIDE, NARROW)
    frac = s.flags.mean()
    assert abs(frac - 0.5) <= 4 * np.sqrt(0.25 / n)
    assert chi2_pvalue(s.z_index, len(support), p) > 1e-3
    assert chi2_pvalue(s.x_index, len(support), q) > 1e-3


def test_dk_coupling_examples():
    s = dk_coupling(WIDE, WIDE, 1.0, 1000, philox(4))
    assert not s.flags.any() and np.array_equal(s.x_index, s.z_index)
    n = 100_000
    s = dk_coupling(WIDE, NARROW, 2.0, n, philox(5))
    assert not s.flags.any()
    support, p, _ = align(WIDE, NARROW)
    assert chi2_pvalue(s.z_index, len(support), p) > 1e-3


@given(seeds, st.floats(1, 5))
def test_dk_coupling_mass_identity(seed, k):
    P, Q = random_pair(np.random.default_rng(seed))
    _, p, q = align(P, Q)
    alpha, beta, mu = dk_parts(p, q, k)
    assert np.all((alpha >= 0) & (alpha <= 1))
    assert np.all(np.abs(np.minimum(p, q / k) + beta * mu - p) <= 1e-12)
    assert abs(np.sum(q * alpha) - dk_divergence(P, Q, k)) <= 1e-12


def test_dk_coupling_abstain_rate_and_marginals():
    n = 100_000
    gen = np.random.default_rng(31)
    for trial in range(4):
        P, Q = random_pair(gen)
        k = float(gen.uniform(1, 3))
        s = dk_coupling(P, Q, k, n, philox(trial))
        support, p, q = align(P, Q)
        dk = dk_divergence(P, Q, k)
        assert abs(s.flags.mean() - dk) <= 4 * np.sqrt(dk * (1 - dk) / n) + 1e-12
        assert chi2_pvalue(s.z_index, len(support), p) > 1e-3
        assert chi2_pvalue(s.x_index, len(support), q) > 1e-3
        kept = ~s.flags
        # copying happens w.p. 1/k on kept indices, and mu may add more matches
        assert np.mean(s.z_index[kept] == s.x_index[kept]) >= 1 / k - 4 * np.sqrt(0.25 / kept.sum())


# the adversary


def test_corrupt_examples():
    z = np.arange(10, dtype=float).reshape(-1, 1)
    x, modified = corrupt(z, 0.0, Targeted(np.zeros((0, 1))), philox(0))
    assert np.array_equal(x, z) and len(modified) == 0
    x, modified = corrupt(z, 1.0, Targeted(np.full((10, 1), 3.0)), philox(0))
    assert np.all(x == 3.0)
    assert modified.tolist() == [i for i in range(10) if i != 3]
    with pytest.raises(InvalidInputError):
        corrupt(z, 0.5, Targeted(np.zeros((2, 1))), philox(0))
    with pytest.raises(InvalidInputError):
        corrupt(z, 1.5, Resample(WIDE), philox(0))


@given(seeds, st.floats(0, 1))
def test_corrupt_budget(seed, gamma):
    rng = philox(seed)
    z = sample_iid(WIDE, 25, rng)
    x, modified = corrupt(z, gamma, Resample(WIDE), rng)
    assert len(modified) <= int(np.floor(gamma * 25 + 1e-12))
    untouched = np.setdiff1d(np.arange(25), modified)
    assert np.array_equal(x[untouched], z[untouched])
