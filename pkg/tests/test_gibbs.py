import dataclasses

import numpy as np
import pytest
from scipy import stats
from scipy.special import gammaln

import conditional_oracles as oracles
from socbayes import models as M
from socbayes import synthetic
from socbayes.diagnostics import summarize
from socbayes.errors import DataError, DomainError, SamplerError
from socbayes.rand import RandomStream
from socbayes.samplers import Schedule, run_gibbs, run_gibbs_hlm1, run_gibbs_hlm2, run_gibbs_hlm3, sample_nu_conditional
from socbayes.samplers import gibbs as G

CONDITIONALS = [
    "model1/beta", "model1/sigma2",
    "model2/theta", "model2/tau2", "model2/beta", "model2/sigma2",
    "model3/theta", "model3/tau2", "model3/group_beta", "model3/beta",
    "model3/between_cov", "model3/group_sigma2", "model3/nu", "model3/sigma2",
]


@pytest.fixture(scope="module")
def conditional_stats():
    return oracles.all_checks(10_000, seed=0)


@pytest.mark.parametrize("name", CONDITIONALS)
def test_full_conditional_matches_joint(conditional_stats, name):
    assert conditional_stats[name] < 0.02


def test_theta_conditional_variance():
    data = oracles.make_problem(1)
    hyper = M.unit_information_config(2, data.X, data.y)
    s = oracles.frozen_state(data, hyper)
    rng = RandomStream(3)
    resid = data.group_ysum - data.group_Xsum @ s.beta
    draws = np.array([G.draw_theta(data, resid, s.sigma2, s.tau2, rng) for _ in range(20_000)])
    expected = 1 / (1 / s.tau2 + data.sizes / s.sigma2)
    assert np.all(np.abs(draws.var(axis=0) / expected - 1) < 0.02 * 2.5)


def test_two_group_offsets_shrink_with_analytic_factor():
    rng = RandomStream(4)
    n, delta, sigma2, tau2 = 200, 2.0, 1.0, 4.0
    groups = [(np.ones((n, 1)), 10 + sign * delta + rng.normal(size=n)) for sign in (1, -1)]
    data = M.HlmData(groups)
    beta = np.array([10.0])
    resid = data.group_ysum - data.group_Xsum @ beta
    draws = np.array([G.draw_theta(data, resid, sigma2, tau2, rng) for _ in range(10_000)])
    shrink = (1 / (1 / tau2 + n / sigma2)) * n / sigma2
    expected = shrink * resid / n
    mc_se = draws.std(axis=0) / np.sqrt(len(draws))
    assert np.sign(draws.mean(axis=0)).tolist() == [1.0, -1.0]
    assert np.all(np.abs(draws.mean(axis=0) - expected) < 3 * mc_se)
    # the data deviation from +-delta is sampling noise of size 1/sqrt(n)
    assert np.all(np.abs(np.abs(expected) - shrink * delta) < 3 / np.sqrt(n))


def test_nu_singleton_grid():
    rng = RandomStream(5)
    assert {sample_nu_conditional([1.0, 2.0], 1.0, 1.0, [5], rng) for _ in range(50)} == {5}


def _freq(draws, grid):
    return np.array([(draws == g).mean() for g in grid])


def test_nu_without_groups_is_truncated_geometric():
    grid = np.arange(1, 101)
    rng = RandomStream(6)
    draws = np.array([sample_nu_conditional([], 1.0, 0.7, grid, rng) for _ in range(100_000)])
    mass = np.exp(-0.7 * grid)
    mass /= mass.sum()
    assert 0.5 * np.abs(_freq(draws, grid) - mass).sum() < 0.01


def test_nu_brute_force_grid():
    grid = np.arange(1, 51)
    s2j, sigma2, kappa0 = np.ones(3), 1.0, 1.0
    logm = np.array(
        [3 * ((v / 2) * np.log(v * sigma2 / 2) - gammaln(v / 2)) - v * (kappa0 + sigma2 / 2 * 3) for v in grid]
    )
    mass = np.exp(logm - logm.max())
    mass /= mass.sum()
    rng = RandomStream(7)
    draws = np.array([sample_nu_conditional(s2j, sigma2, kappa0, grid, rng) for _ in range(100_000)])
    assert 0.5 * np.abs(_freq(draws, grid) - mass).sum() < 0.01


def test_nu_grid_errors():
    with pytest.raises(SamplerError):
        sample_nu_conditional([1.0, 1.0], 0.0, 1.0, np.arange(1, 10), RandomStream(0))
    with pytest.raises(DomainError):
        sample_nu_conditional([1.0], 1.0, 1.0, [], RandomStream(0))
    with pytest.raises(DomainError):
        sample_nu_conditional([1.0], 1.0, 1.0, [0, 1], RandomStream(0))


def test_between_cov_without_groups_is_prior():
    data = oracles.make_problem(0)
    hyper = M.unit_information_config(3, data.X, data.y)
    rng = RandomStream(8)
    draws = np.array(
        [G.draw_between_cov(hyper, np.empty((0, 3)), np.zeros(3), rng)[0, 0] for _ in range(10_000)]
    )
    prior = stats.invgamma((hyper.between_df - 3 + 1) / 2, scale=hyper.between_scale[0, 0] / 2)
    assert stats.kstest(draws, prior.cdf).statistic < 0.02


def _pooled_data(seed, n=2000, beta=(2.0, 1.0, -1.0), sigma=1.5, groups=4):
    rng = RandomStream(seed, 5)
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.integers(0, 2, n)])
    y = X @ np.asarray(beta) + sigma * rng.normal(size=n)
    g = np.arange(n) % groups
    return M.HlmData.from_arrays(X, y, g), np.asarray(beta), sigma**2


def test_model1_point_mass_variance_matches_conjugate_normal():
    data, beta, s2 = _pooled_data(9, n=300)
    base = M.unit_information_config(1, data.X, data.y)
    hyper = dataclasses.replace(base, sigma2_df=1e9, sigma2_scale=s2)
    chain = run_gibbs_hlm1(data, hyper, Schedule(6000, 500, seed=1))
    prec = np.linalg.inv(hyper.coef_cov) + data.XtX / s2
    post_mean = np.linalg.solve(prec, np.linalg.solve(hyper.coef_cov, hyper.coef_mean) + data.Xty / s2)
    rep = summarize(chain)
    for k in range(3):
        s = rep[f"beta[{k + 1}]"]
        assert abs(s.mean - post_mean[k]) < 3 * s.mc_se
    assert np.allclose(chain["sigma2"], s2, rtol=1e-3)


def test_model1_interval_coverage():
    covered = np.zeros(3, dtype=int)
    for rep in range(100):
        data, beta, _ = _pooled_data(1000 + rep)
        hyper = M.unit_information_config(1, data.X, data.y)
        chain = run_gibbs_hlm1(data, hyper, Schedule(1200, 200, seed=rep))
        lo, hi = np.quantile(chain.draws[:, :3], [0.025, 0.975], axis=0)
        covered += (lo <= beta) & (beta <= hi)
    assert np.all(covered >= 80)


def test_model2_with_vanishing_random_effects_matches_model1():
    data, _, _ = _pooled_data(11, n=400)
    h1 = M.unit_information_config(1, data.X, data.y)
    h2 = dataclasses.replace(M.unit_information_config(2, data.X, data.y), tau2_df=1e9, tau2_scale=1e-10)
    sched = Schedule(8000, 500, seed=2)
    r1 = summarize([run_gibbs_hlm1(data, h1, sched, stream_id=i) for i in range(2)])
    r2 = summarize([run_gibbs_hlm2(data, h2, sched, stream_id=i) for i in range(2)])
    for k in range(3):
        a, b = r1[f"beta[{k + 1}]"], r2[f"beta[{k + 1}]"]
        assert abs(a.mean - b.mean) < 3 * np.hypot(a.mc_se, b.mc_se)


def _saber(seed, **kw):
    score, sex, work, dept = synthetic.saber11(synthetic.SaberParams(**kw), seed)
    X = np.column_stack([np.ones(score.size), sex, work])
    return M.HlmData.from_arrays(X, score, dept)


def test_model3_homogeneous_groups_follow_pooled_fit():
    data = _saber(3, groups=10, n=1500, tau2=0.0, coef_sd=(0.0, 0.0, 0.0), sigma_spread=0.0)
    pooled = summarize(run_gibbs_hlm1(data, M.unit_information_config(1, data.X, data.y), Schedule(3000, 500)))
    chain = run_gibbs_hlm3(data, M.unit_information_config(3, data.X, data.y), Schedule(3000, 500))
    layout = M.HlmLayout(3, data.p, data.m)
    bj = layout.columns(chain.draws, "group_beta").reshape(-1, data.m, data.p)
    # slopes: the intercept trades off against theta_j
    for k in (1, 2):
        ref = pooled[f"beta[{k + 1}]"].mean
        assert np.all(np.abs(bj[:, :, k].mean(axis=0) - ref) < 3 * bj[:, :, k].std(axis=0))


def test_model3_between_cov_paired_simulation():
    def trace_mean(coef_sd):
        data = _saber(4, groups=15, n=1500, coef_sd=coef_sd, tau2=4.0, sigma_spread=0.0)
        chain = run_gibbs_hlm3(data, M.unit_information_config(3, data.X, data.y), Schedule(3000, 500))
        return sum(chain[f"Sigma[{k},{k}]"].mean() for k in (1, 2, 3))

    # the unit-information prior keeps E[Sigma] near S0 / (n0 + m), so the control must clear that floor
    control_sd = (0.0, 15.0, 15.0)
    homogeneous, heterogeneous = trace_mean((0.0, 0.0, 0.0)), trace_mean(control_sd)
    assert homogeneous < heterogeneous
    assert homogeneous < sum(v * v for v in control_sd)


def test_model3_needs_enough_rows_per_group():
    X = np.column_stack([np.ones(12), np.arange(12.0) % 2, np.arange(12.0) % 3 == 0])
    y = np.arange(12.0) + np.sin(np.arange(12.0))
    data = M.HlmData.from_arrays(X, y, ["big"] * 9 + ["tiny"] * 3)
    hyper = M.unit_information_config(3, data.X, data.y)
    with pytest.raises(DataError, match="tiny"):
        run_gibbs(data, hyper, Schedule(10))


def test_random_effect_models_need_two_groups():
    data = M.HlmData([(np.column_stack([np.ones(20), np.arange(20.0)]), np.arange(20.0) ** 1.5)])
    with pytest.raises(DataError):
        run_gibbs(data, M.unit_information_config(2, data.X, data.y), Schedule(10))


def test_wrong_model_runner_rejected():
    data = oracles.make_problem(0)
    with pytest.raises(DomainError):
        run_gibbs_hlm3(data, M.unit_information_config(2, data.X, data.y), Schedule(10))


def test_gibbs_reproducible_and_shaped():
    data = oracles.make_problem(2)
    hyper = M.unit_information_config(3, data.X, data.y)
    sched = Schedule(60, 10, 5, seed=4)
    a = run_gibbs(data, hyper, sched, stream_id=3)
    b = run_gibbs(data, hyper, sched, stream_id=3)
    assert np.array_equal(a.draws, b.draws)
    m, p = data.m, data.p
    assert a.draws.shape == (10, 2 * m + p * m + p + p * (p + 1) // 2 + 3)
    assert len(run_gibbs_hlm1(data, M.unit_information_config(1, data.X, data.y), Schedule(25))) == 25


def test_model1_intercept_coverage_on_homogeneous_scores():
    params = dict(groups=5, n=1000, tau2=0.0, coef_sd=(0.0, 0.0, 0.0), sigma_spread=0.0)
    hits = 0
    for rep in range(100):
        data = _saber(2000 + rep, **params)
        chain = run_gibbs_hlm1(data, M.unit_information_config(1, data.X, data.y), Schedule(1200, 200, seed=rep))
        lo, hi = np.quantile(chain["beta[1]"], [0.025, 0.975])
        hits += lo <= 50.0 <= hi
    assert hits >= 90
