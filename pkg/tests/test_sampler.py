import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from mcmc_stats import cell_autocorr_times, chi_square_pvalue
from vnpc.prior import LevyConfig, largest_atom_cdf
from vnpc.sampler import (
    ChainFailure,
    McmcConfig,
    _Chain,
    location_halfwidth,
    propose_angles,
    propose_k,
    propose_location,
    propose_radial,
    run_chain,
    run_var_baseline,
    var_posterior,
)
from vnpc.var import VAR2_PARAMS, fit_ols, simulate_var


class ScriptedRng:
    """Feeds a fixed jump magnitude and direction to ``propose_k``."""

    def __init__(self, size, up):
        self.size, self.up = size, up

    def integers(self, lo, hi):
        return self.size

    def random(self):
        return 0.25 if self.up else 0.75


def k_proposal_matrix(k_max, J=3):
    P = np.zeros((k_max + 1, k_max + 1))
    for k in range(1, k_max + 1):
        for size in range(1, J + 1):
            for up in (True, False):
                P[k, propose_k(k, k_max, ScriptedRng(size, up), J)] += 1 / (2 * J)
    return P[1:, 1:]


@pytest.mark.parametrize("k_max", [1, 2, 3, 5, 300])
def test_k_proposal_symmetric_and_in_range(k_max):
    P = k_proposal_matrix(k_max)
    assert np.allclose(P.sum(1), 1)
    assert np.allclose(P, P.T)


def test_k_proposal_symmetric_empirically():
    rng = np.random.default_rng(7)
    draws = np.array([propose_k(150, 300, rng) for _ in range(100_000)]) - 150
    vals, counts = np.unique(draws, return_counts=True)
    assert list(vals) == [-3, -2, -1, 1, 2, 3]
    assert chi_square_pvalue(counts, np.full(6, 1 / 6)) > 1e-3
    # mirror pairs
    assert stats.binomtest(int(counts[3:].sum()), int(counts.sum())).pvalue > 1e-3


def test_k_proposal_boundaries():
    rng = np.random.default_rng(1)
    lo = [propose_k(1, 300, rng) for _ in range(2000)]
    hi = [propose_k(300, 300, rng) for _ in range(2000)]
    assert min(lo) >= 1 and max(lo) <= 4
    assert max(hi) <= 300 and min(hi) >= 297


def test_location_halfwidth_example():
    assert location_halfwidth(1, 256) == pytest.approx(math.pi / 33)
    assert location_halfwidth(1, 256) == pytest.approx(0.095200, abs=1e-6)


@pytest.mark.parametrize("l", [1, 5, 20])
def test_location_proposals_stay_in_range(l):
    rng = np.random.default_rng(l)
    for x0 in (0.0, 1e-3, math.pi / 2, math.pi - 1e-3, math.pi):
        xs = np.array([propose_location(x0, l, 16, rng) for _ in range(20_000)])
        assert xs.min() >= 0 and xs.max() <= math.pi


def test_location_proposal_reflection_is_symmetric():
    # density of x -> y equals density of y -> x for the reflected uniform walk
    rng = np.random.default_rng(3)
    x0, y0, h = 0.02, 0.06, 0.005
    delta = location_halfwidth(1, 256)
    fwd = np.array([propose_location(x0, 1, 256, rng) for _ in range(200_000)])
    bwd = np.array([propose_location(y0, 1, 256, rng) for _ in range(200_000)])
    a = np.mean(np.abs(fwd - y0) < h)
    b = np.mean(np.abs(bwd - x0) < h)
    assert a > 0 and b > 0
    assert abs(a - b) < 5 * math.sqrt(2 * h / delta / 200_000)


@given(st.floats(1e-6, 1e6), st.floats(0.01, 5.0), st.integers(0, 2**32 - 1))
def test_radial_proposal_positive(r, scale, seed):
    assert propose_radial(r, scale, np.random.default_rng(seed)) > 0


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 3.2))
def test_angle_proposals_stay_in_range(seed, scale):
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0, 1, 3) * np.array([np.pi, np.pi, 2 * np.pi])
    out = propose_angles(phi, scale, rng)
    assert np.all(out >= 0)
    assert np.all(out[:2] <= np.pi) and out[2] < 2 * np.pi


def small_cfg(**kw):
    base = dict(procedure="vnpc", order=1, iterations=300, burn_in=100, thin=5, L=6, seed=11, check_every=50)
    base.update(kw)
    return McmcConfig(**base)


@pytest.fixture(scope="module")
def var2_data():
    return simulate_var(VAR2_PARAMS, 64, seed=3)


def test_config_validation():
    with pytest.raises(ValueError):
        McmcConfig(iterations=10, burn_in=10)
    with pytest.raises(ValueError):
        McmcConfig(thin=0)
    with pytest.raises(ValueError):
        McmcConfig(procedure="var", order=0)
    with pytest.raises(ValueError):
        McmcConfig(procedure="bogus")


def test_draw_count_and_shapes(var2_data):
    cfg = small_cfg(iterations=303, burn_in=100, thin=5)
    d = run_chain(var2_data, cfg)
    assert d.M == (303 - 100) // 5
    assert d.f.shape == (d.M, 33, 2, 2)
    assert d.beta.shape == (d.M, 4)
    assert np.all(np.diff(d.iters) == 5)
    assert np.allclose(d.f, np.conj(np.swapaxes(d.f, -1, -2)))
    assert np.all(np.linalg.eigvalsh(d.f) > 0)


def test_seed_determinism(var2_data):
    a = run_chain(var2_data, small_cfg())
    b = run_chain(var2_data, small_cfg())
    assert np.array_equal(a.f, b.f)
    assert np.array_equal(a.k, b.k)
    assert np.array_equal(a.beta, b.beta)
    assert np.array_equal(a.log_posterior, b.log_posterior)
    c = run_chain(var2_data, small_cfg(seed=12))
    assert not np.array_equal(a.f, c.f)


def test_scales_frozen_after_burn_in(var2_data):
    d = run_chain(var2_data, small_cfg(iterations=400, burn_in=200))
    assert np.all(d.scale_trace == d.scale_trace[0])
    # adaptation did move them during burn-in
    assert not np.allclose(d.scale_trace[0][:6], 0.5)


def test_cache_coherence_check(var2_data):
    cfg = small_cfg()
    ch = _Chain(np.asarray(var2_data), cfg)
    s = ch.init_state()
    for _ in range(20):
        ch.update_k(s)
        for l in range(ch.L):
            ch.update_radial(s, l)
            ch.update_location(s, l)
            ch.update_angles(s, l)
        ch.update_beta(s, 0)
    ch.check_cache(s)
    s.loglik += 1e-3
    with pytest.raises(ChainFailure):
        ch.check_cache(s)


def test_vnpc_order0_is_vnp(var2_data):
    # order 0 with the vnpc label runs the identical algorithm as vnp
    a = run_chain(var2_data, small_cfg(procedure="vnp", order=0))
    b = run_chain(var2_data, small_cfg(procedure="vnpc", order=0))
    assert np.array_equal(a.f, b.f)


def test_vnpc0_and_vnp_posterior_means_agree():
    z = simulate_var(VAR2_PARAMS, 64, seed=8)
    means = {}
    for proc in ("vnp", "vnpc"):
        per_chain = []
        for seed in range(5):
            d = run_chain(z, McmcConfig(procedure=proc, order=0, iterations=600, burn_in=200, thin=2, L=6, seed=seed))
            per_chain.append(d.f[:, :, 0, 0].real.mean(0))
        means[proc] = np.array(per_chain)
    diff = means["vnp"].mean(0) - means["vnpc"].mean(0)
    se = np.sqrt(means["vnp"].var(0, ddof=1) / 5 + means["vnpc"].var(0, ddof=1) / 5)
    assert np.all(np.abs(diff) <= 3 * se + 1e-12)


@pytest.mark.slow
def test_acceptance_rates_on_var2_data():
    z = simulate_var(VAR2_PARAMS, 256, seed=2)
    d = run_chain(z, McmcConfig(procedure="vnpc", order=1, iterations=5000, burn_in=2500, L=20, seed=4))
    for block, rate in d.acceptance.items():
        assert 0.05 < rate < 0.8, (block, rate)


def test_prior_only_radial_and_location_targets():
    # single atom, likelihood off: the chain targets the truncated-series law for r and U(0, pi) for x
    cfg = McmcConfig(
        procedure="vnp", order=0, iterations=40_000, burn_in=2000, thin=1, L=1,
        levy=LevyConfig(1.0, 1.0), use_likelihood=False, seed=5,
    )
    z = np.random.default_rng(0).standard_normal((16, 1))
    ch = _Chain(z, cfg)
    s = ch.init_state()
    rs, xs = [], []
    for it in range(cfg.iterations):
        ch.update_radial(s, 0)
        ch.update_location(s, 0)
        if it >= cfg.burn_in:
            rs.append(s.atoms.r[0])
            xs.append(s.atoms.x[0])
    rs, xs = np.array(rs), np.array(xs)
    levy = cfg.levy
    # joint histogram over radial quartiles x location halves against the product target
    qs = [0.25, 0.5, 0.75]
    edges = []
    for q in qs:
        edges.append(_quantile_of_largest(q, levy))
    rbin = np.searchsorted(edges, rs)
    xbin = (xs > math.pi / 2).astype(int)
    cells = rbin * 2 + xbin
    counts = np.bincount(cells, minlength=8)
    assert chi_square_pvalue(counts, np.full(8, 1 / 8), cell_autocorr_times(cells, 8)) > 1e-3


def _quantile_of_largest(q, levy):
    from scipy.optimize import brentq

    return brentq(lambda t: largest_atom_cdf(t, levy) - q, 1e-12, 1e3)


def test_var_posterior_mean_is_ols():
    z = simulate_var(VAR2_PARAMS, 1000, seed=1)
    mean, cov, theta = var_posterior(z, 2)
    assert np.max(np.abs(mean - fit_ols(z, 2).beta)) < 1e-6
    assert np.allclose(cov, cov.T)
    assert np.all(np.linalg.eigvalsh(cov) > 0)


def test_var_baseline_draws_match_closed_form():
    z = simulate_var(VAR2_PARAMS, 1000, seed=1)
    mean, cov, _ = var_posterior(z, 2)
    d = run_var_baseline(z, 2, McmcConfig(procedure="var", order=2, seed=3), n_draws=10_000)
    w = np.linalg.solve(np.linalg.cholesky(cov), (d.beta - mean).T).T
    m = w.shape[1]
    S = np.cov(w.T)
    assert np.linalg.norm(S - np.eye(m)) < 2 * math.sqrt((m * m + m) / len(w))
    assert np.all(np.abs(w.mean(0)) < 4 / math.sqrt(len(w)))


def test_var_baseline_procedure_dispatch():
    z = simulate_var(VAR2_PARAMS, 128, seed=1)
    d = run_chain(z, McmcConfig(procedure="var", order=2, iterations=100, burn_in=50, thin=5, seed=0))
    assert d.procedure == "var" and d.order == 2 and d.M == 10
    with pytest.raises(ValueError):
        run_var_baseline(z, 0)
