"""Gibbs samplers for the three grouped linear regression models.

Each ``draw_*`` function samples one block from its full conditional given
the current values of all the others. The ``run_gibbs_hlm*`` drivers sweep
the blocks in a fixed order:

* model 1: beta, sigma2
* model 2: theta, tau2, beta, sigma2
* model 3: theta, tau2, group_beta, beta, between_cov, group_sigma2, nu, sigma2
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .. import rand
from ..errors import DataError, DomainError, SamplerError
from ..models import HlmData, HlmHyperparams, HlmLayout, HlmState, ols_estimates
from .chain import Chain, Schedule

DEFAULT_NU_GRID = np.arange(1, 101)


# ---------------------------------------------------------------------------
# Full conditionals shared by models 1 and 2
# ---------------------------------------------------------------------------


def draw_beta(data: HlmData, hyper: HlmHyperparams, sigma2: float, theta, rng) -> np.ndarray:
    """Coefficients given sigma2 (and random intercepts ``theta``, or ``None``)."""
    prior_prec = np.linalg.inv(hyper.coef_cov)
    Q = prior_prec + data.XtX / sigma2
    rhs = data.Xty if theta is None else data.Xty - theta @ data.group_Xsum
    b = prior_prec @ hyper.coef_mean + rhs / sigma2
    return rand.sample_mvnormal_precision(b, 0.5 * (Q + Q.T), rng, "beta conditional precision")


def draw_sigma2(data: HlmData, hyper: HlmHyperparams, beta, theta, rng) -> float:
    """Pooled residual variance: ``IG((nu0 + n)/2, (nu0 s0 + SSR)/2)``."""
    resid = data.y - data.X @ beta
    if theta is not None:
        resid = resid - theta[data.group_index]
    shape = 0.5 * (hyper.sigma2_df + data.n)
    scale = 0.5 * (hyper.sigma2_df * hyper.sigma2_scale + resid @ resid)
    return rand.sample_inverse_gamma(shape, scale, rng)


def draw_theta(data: HlmData, resid_sums, noise_var, tau2: float, rng) -> np.ndarray:
    """Random intercepts given the per-group sums of ``y - x.beta``.

    ``noise_var`` is a scalar (model 2) or one variance per group (model 3).
    """
    prec = 1.0 / tau2 + data.sizes / noise_var
    mean = (resid_sums / noise_var) / prec
    return mean + rng.standard_normal(data.m) / np.sqrt(prec)


def draw_tau2(theta, df: float, scale: float, rng) -> float:
    theta = np.asarray(theta, dtype=float)
    shape = 0.5 * (df + theta.size)
    return rand.sample_inverse_gamma(shape, 0.5 * (df * scale + theta @ theta), rng)


# ---------------------------------------------------------------------------
# Model 3 conditionals
# ---------------------------------------------------------------------------


def draw_group_beta(data: HlmData, beta, between_cov, group_sigma2, theta, rng) -> np.ndarray:
    """All group coefficient vectors at once (rows of an ``m x p`` array)."""
    S_inv = np.linalg.inv(between_cov)
    S_inv = 0.5 * (S_inv + S_inv.T)
    Q = S_inv[None] + data.group_XtX / group_sigma2[:, None, None]
    rhs = data.group_Xty - theta[:, None] * data.group_Xsum
    b = (S_inv @ beta)[None] + rhs / group_sigma2[:, None]
    return rand.sample_mvnormal_precision(b, Q, rng, "group coefficient precision")


def draw_population_beta(hyper: HlmHyperparams, group_beta, between_cov, rng) -> np.ndarray:
    group_beta = np.atleast_2d(group_beta)
    m = group_beta.shape[0]
    L_inv = np.linalg.inv(hyper.coef_cov)
    S_inv = np.linalg.inv(between_cov)
    Q = L_inv + m * S_inv
    b = L_inv @ hyper.coef_mean + S_inv @ group_beta.sum(axis=0)
    return rand.sample_mvnormal_precision(b, 0.5 * (Q + Q.T), rng, "population beta precision")


def draw_between_cov(hyper: HlmHyperparams, group_beta, beta, rng) -> np.ndarray:
    """``InverseWishart(n0 + m, S0 + sum_j (beta_j - beta)(beta_j - beta)^T)``."""
    dev = np.atleast_2d(group_beta) - beta
    if dev.shape[0] == 0:
        scatter = np.zeros_like(hyper.between_scale)
    else:
        scatter = dev.T @ dev
    return rand.sample_inverse_wishart(hyper.between_df + dev.shape[0], hyper.between_scale + scatter, rng)


def draw_group_sigma2(data: HlmData, group_beta, theta, nu: int, sigma2: float, rng) -> np.ndarray:
    fitted = np.einsum("nk,nk->n", data.X, group_beta[data.group_index]) + theta[data.group_index]
    ssr = np.bincount(data.group_index, weights=(data.y - fitted) ** 2, minlength=data.m)
    shape = 0.5 * (nu + data.sizes)
    scale = 0.5 * (nu * sigma2 + ssr)
    return scale / rng.standard_gamma(shape)


def nu_log_mass(grid, sigma2_groups, sigma2: float, kappa0: float) -> np.ndarray:
    """Unnormalized log full-conditional mass of the pooling degrees of freedom over ``grid``."""
    grid = np.asarray(grid, dtype=float)
    s2j = np.asarray(sigma2_groups, dtype=float)
    m = s2j.size
    sum_log_prec = -np.log(s2j).sum()
    sum_prec = (1.0 / s2j).sum()
    half = grid / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            m * (half * np.log(grid * sigma2 / 2.0) - gammaln(half))
            + half * sum_log_prec
            - grid * (kappa0 + 0.5 * sigma2 * sum_prec)
        )
    return np.where(np.isnan(out), -np.inf, out)


def sample_nu_conditional(sigma2_groups, sigma2: float, kappa0: float, grid, rng) -> int:
    grid = np.asarray(grid)
    if grid.size == 0 or np.any(grid < 1):
        raise DomainError("nu grid must be non-empty with values >= 1")
    logm = nu_log_mass(grid, sigma2_groups, sigma2, kappa0)
    top = logm.max()
    if not np.isfinite(top):
        raise SamplerError("every value on the nu grid has zero conditional mass")
    w = np.exp(logm - top)
    cdf = np.cumsum(w)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return int(grid[min(idx, grid.size - 1)])


def draw_sigma2_gamma(hyper: HlmHyperparams, group_sigma2, nu: int, rng) -> float:
    """Pooled variance of model 3: ``Gamma(a0 + m nu/2, b0 + nu/2 sum_j 1/sigma2_j)``."""
    s2j = np.asarray(group_sigma2, dtype=float)
    shape = hyper.sigma2_shape + 0.5 * s2j.size * nu
    rate = hyper.sigma2_rate + 0.5 * nu * (1.0 / s2j).sum()
    return rand.sample_gamma(shape, rate, rng)


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------


def default_init(data: HlmData, hyper: HlmHyperparams) -> HlmState:
    """OLS coefficients, OLS residual variance for every variance, zero intercepts, nu = 1."""
    beta_hat, s2 = ols_estimates(data.X, data.y)
    state = HlmState(beta=beta_hat.copy(), sigma2=s2)
    if hyper.model_id >= 2:
        state.theta = np.zeros(data.m)
        state.tau2 = s2
    if hyper.model_id == 3:
        denom = hyper.between_df - data.p - 1
        state.between_cov = hyper.between_scale / denom if denom > 0 else hyper.between_scale.copy()
        state.group_beta = np.tile(beta_hat, (data.m, 1))
        state.group_sigma2 = np.full(data.m, s2)
        state.nu = 1
    return state


def sweep(data: HlmData, hyper: HlmHyperparams, s: HlmState, rng, nu_grid=DEFAULT_NU_GRID) -> HlmState:
    """One Gibbs sweep; updates ``s`` in place and returns it."""
    if hyper.model_id == 1:
        s.beta = draw_beta(data, hyper, s.sigma2, None, rng)
        s.sigma2 = draw_sigma2(data, hyper, s.beta, None, rng)
    elif hyper.model_id == 2:
        resid_sums = data.group_ysum - data.group_Xsum @ s.beta
        s.theta = draw_theta(data, resid_sums, s.sigma2, s.tau2, rng)
        s.tau2 = draw_tau2(s.theta, hyper.tau2_df, hyper.tau2_scale, rng)
        s.beta = draw_beta(data, hyper, s.sigma2, s.theta, rng)
        s.sigma2 = draw_sigma2(data, hyper, s.beta, s.theta, rng)
    else:
        resid_sums = data.group_ysum - np.einsum("jk,jk->j", data.group_Xsum, s.group_beta)
        s.theta = draw_theta(data, resid_sums, s.group_sigma2, s.tau2, rng)
        s.tau2 = draw_tau2(s.theta, hyper.tau2_df, hyper.tau2_scale, rng)
        s.group_beta = draw_group_beta(data, s.beta, s.between_cov, s.group_sigma2, s.theta, rng)
        s.beta = draw_population_beta(hyper, s.group_beta, s.between_cov, rng)
        s.between_cov = draw_between_cov(hyper, s.group_beta, s.beta, rng)
        s.group_sigma2 = draw_group_sigma2(data, s.group_beta, s.theta, s.nu, s.sigma2, rng)
        s.nu = sample_nu_conditional(s.group_sigma2, s.sigma2, hyper.nu_rate, nu_grid, rng)
        s.sigma2 = draw_sigma2_gamma(hyper, s.group_sigma2, s.nu, rng)
    return s


def run_gibbs(
    data: HlmData,
    hyper: HlmHyperparams,
    schedule: Schedule,
    stream_id: int = 0,
    init: HlmState | None = None,
    nu_grid=DEFAULT_NU_GRID,
    rng=None,
) -> Chain:
    if hyper.p != data.p:
        raise DataError(f"hyperparameters are for p={hyper.p} covariates, data has p={data.p}")
    if hyper.model_id >= 2 and data.m < 2:
        raise DataError("random-effect models need at least two groups")
    if hyper.model_id == 3:
        small = [lab for lab, nj in zip(data.labels, data.sizes) if nj <= data.p]
        if small:
            raise DataError(f"model 3 needs more than p={data.p} rows per group; too few in: {', '.join(small)}")
    rng = rng if rng is not None else rand.RandomStream(schedule.seed, stream_id)
    state = (init or default_init(data, hyper)).copy()
    layout = HlmLayout(hyper.model_id, data.p, data.m)
    draws = np.empty((schedule.retained, layout.size))
    row = 0
    for b in range(1, schedule.iterations + 1):
        sweep(data, hyper, state, rng, nu_grid)
        if schedule.keep(b):
            draws[row] = layout.pack(state)
            row += 1
    n = schedule.iterations - schedule.burn_in
    chain = Chain(draws, layout.names, n, n, schedule, stream_id)
    chain.info.update(model_id=hyper.model_id, p=data.p, m=data.m)
    return chain


def run_gibbs_hlm1(data, hyper, schedule, **kw) -> Chain:
    _expect(hyper, 1)
    return run_gibbs(data, hyper, schedule, **kw)


def run_gibbs_hlm2(data, hyper, schedule, **kw) -> Chain:
    _expect(hyper, 2)
    return run_gibbs(data, hyper, schedule, **kw)


def run_gibbs_hlm3(data, hyper, schedule, **kw) -> Chain:
    _expect(hyper, 3)
    return run_gibbs(data, hyper, schedule, **kw)


def _expect(hyper, model_id):
    if hyper.model_id != model_id:
        raise DomainError(f"hyperparameters are for model {hyper.model_id}, not model {model_id}")
