"""Model definitions and their closed-form pieces.

Three families live here:

* the Dirichlet-Multinomial conjugate pair used for poll shares,
* a Poisson log-link GLM with a Gaussian prior on the coefficients,
* three Normal linear regressions for grouped data: pooled (model 1),
  random intercepts (model 2) and group-specific coefficients and variances
  with random intercepts (model 3).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from . import rand
from .errors import DataError, DomainError

# ---------------------------------------------------------------------------
# Dirichlet-Multinomial
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirichletMultinomialModel:
    counts: np.ndarray
    prior_alpha: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        alpha = np.asarray(self.prior_alpha, dtype=float)
        if counts.ndim != 1 or counts.size < 2:
            raise DomainError("need at least two categories")
        if np.any(counts < 0) or np.any(counts != np.floor(counts)):
            raise DomainError("counts must be non-negative integers")
        if alpha.shape != counts.shape:
            raise DomainError("prior_alpha and counts must have the same length")
        if np.any(~(alpha > 0)):
            raise DomainError("prior concentrations must be positive")
        object.__setattr__(self, "counts", counts.astype(np.int64))
        object.__setattr__(self, "prior_alpha", alpha)

    @classmethod
    def jeffreys(cls, counts) -> "DirichletMultinomialModel":
        counts = np.asarray(counts)
        return cls(counts, np.full(counts.shape, 0.5))

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def k(self) -> int:
        return int(self.counts.size)


def multinomial_logpmf(counts, theta) -> float:
    counts = np.asarray(counts, dtype=float)
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(counts == 0, 0.0, counts * np.log(theta))
    return float(gammaln(counts.sum() + 1) - gammaln(counts + 1).sum() + terms.sum())


def dirichlet_posterior_update(model: DirichletMultinomialModel) -> np.ndarray:
    return model.prior_alpha + model.counts


def dirichlet_posterior_mean(alpha_post) -> np.ndarray:
    alpha_post = np.asarray(alpha_post, dtype=float)
    if np.any(~(alpha_post > 0)):
        raise DomainError("posterior concentrations must be positive")
    return alpha_post / alpha_post.sum()


def dirichlet_mean_decomposition(model: DirichletMultinomialModel):
    """Split the posterior mean into its prior and sample-proportion parts.

    Returns ``(prior_weight, prior_mean, data_weight, data_mean)`` such that
    ``prior_weight * prior_mean + data_weight * data_mean`` is the posterior mean.
    With no data the sample proportion is undefined and returned as zeros.
    """
    a_star = model.prior_alpha.sum()
    n = model.n
    prior_mean = model.prior_alpha / a_star
    data_mean = model.counts / n if n > 0 else np.zeros(model.k)
    return a_star / (a_star + n), prior_mean, n / (a_star + n), data_mean


# ---------------------------------------------------------------------------
# Poisson GLM
# ---------------------------------------------------------------------------


def build_quadratic_design(ages) -> np.ndarray:
    """Columns ``(1, age, age**2)``."""
    ages = np.asarray(ages, dtype=float).ravel()
    if ages.size == 0:
        raise DataError("ages must be non-empty")
    return np.column_stack([np.ones_like(ages), ages, ages**2])


@dataclass(frozen=True)
class PoissonGlmTarget:
    """Log-posterior of ``y_i ~ Poisson(exp(x_i . beta))`` with ``beta ~ N(prior_mean, prior_cov)``.

    The additive constant of the log-posterior is dropped (fixed at zero).
    """

    design: np.ndarray
    y: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    _xty: np.ndarray = field(init=False, repr=False)
    _prior_prec: np.ndarray = field(init=False, repr=False)
    _prec_mean: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.design, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        b0 = np.asarray(self.prior_mean, dtype=float).ravel()
        S0 = np.atleast_2d(np.asarray(self.prior_cov, dtype=float))
        if X.shape[0] != y.size:
            raise DataError(f"design has {X.shape[0]} rows but y has {y.size} entries")
        if np.any(y < 0):
            raise DataError("Poisson counts must be non-negative")
        k = X.shape[1]
        if b0.size != k or S0.shape != (k, k):
            raise DomainError("prior dimensions do not match the design")
        L = rand.cholesky_spd(S0, "prior covariance")
        prec = np.linalg.solve(L.T, np.linalg.solve(L, np.eye(k)))
        prec = 0.5 * (prec + prec.T)
        for name, value in [
            ("design", X),
            ("y", y),
            ("prior_mean", b0),
            ("prior_cov", S0),
            ("_xty", X.T @ y),
            ("_prior_prec", prec),
            ("_prec_mean", prec @ b0),
        ]:
            object.__setattr__(self, name, value)

    @classmethod
    def iid_prior(cls, design, y, variance: float = 10.0) -> "PoissonGlmTarget":
        k = np.atleast_2d(design).shape[1]
        return cls(design, y, np.zeros(k), variance * np.eye(k))

    @property
    def k(self) -> int:
        return self.design.shape[1]

    @property
    def n(self) -> int:
        return self.design.shape[0]

    def log_posterior(self, beta) -> float:
        beta = np.asarray(beta, dtype=float)
        eta = self.design @ beta
        with np.errstate(over="ignore"):
            rate_sum = np.exp(eta).sum()
        if not np.isfinite(rate_sum):
            return -np.inf
        return float(
            beta @ self._xty - rate_sum - 0.5 * beta @ self._prior_prec @ beta + beta @ self._prec_mean
        )

    def grad(self, beta, likelihood_only: bool = False) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            g = self._xty - self.design.T @ np.exp(self.design @ beta)
        if not likelihood_only:
            g = g - self._prior_prec @ beta + self._prec_mean
        if not np.all(np.isfinite(g)):
            return np.full(beta.shape, np.nan)
        return g

    def pointwise_loglik(self, draws) -> np.ndarray:
        """``log p(y_i | beta_b)`` for every draw (rows) and observation (columns)."""
        draws = np.atleast_2d(draws)
        eta = draws @ self.design.T
        with np.errstate(over="ignore"):
            return self.y * eta - np.exp(eta) - gammaln(self.y + 1)


def poisson_log_posterior(beta, target: PoissonGlmTarget) -> float:
    return target.log_posterior(beta)


def poisson_log_posterior_grad(beta, target: PoissonGlmTarget, likelihood_only: bool = False) -> np.ndarray:
    """Gradient of :func:`poisson_log_posterior`.

    ``likelihood_only=True`` drops the Gaussian-prior term and returns just
    ``sum_i (y_i - exp(x_i . beta)) x_i``.
    """
    return target.grad(beta, likelihood_only=likelihood_only)


# ---------------------------------------------------------------------------
# Linear regression for grouped data
# ---------------------------------------------------------------------------


def ols_estimates(design, y):
    """Least-squares coefficients and the unbiased residual variance ``RSS / (n - p)``."""
    X = np.atleast_2d(np.asarray(design, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if n <= p:
        raise DataError(f"need more rows than columns for OLS (n={n}, p={p})")
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    rank = int((diag > diag.max() * max(n, p) * np.finfo(float).eps).sum()) if diag.size else 0
    if rank < p:
        raise DataError(f"design is rank deficient: rank {rank} < {p} columns")
    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ beta
    return beta, float(resid @ resid / (n - p))


@dataclass
class HlmData:
    """Grouped regression data: one ``(X_j, y_j)`` pair per group."""

    groups: list
    labels: list = None

    def __post_init__(self):
        if not self.groups:
            raise DataError("no groups supplied")
        groups = []
        p = None
        for j, (X, y) in enumerate(self.groups):
            X = np.atleast_2d(np.asarray(X, dtype=float))
            y = np.asarray(y, dtype=float).ravel()
            if X.shape[0] != y.size:
                raise DataError(f"group {j}: design rows {X.shape[0]} != responses {y.size}")
            if y.size == 0:
                raise DataError(f"group {j} is empty")
            if p is None:
                p = X.shape[1]
            elif X.shape[1] != p:
                raise DataError("all groups must share the same number of covariates")
            groups.append((X, y))
        self.groups = groups
        if self.labels is None:
            self.labels = [str(j + 1) for j in range(len(groups))]
        self.X = np.vstack([g[0] for g in groups])
        self.y = np.concatenate([g[1] for g in groups])
        self.sizes = np.array([g[1].size for g in groups])
        self.group_index = np.repeat(np.arange(len(groups)), self.sizes)
        self.XtX = self.X.T @ self.X
        self.Xty = self.X.T @ self.y
        self.group_XtX = np.stack([X.T @ X for X, _ in groups])
        self.group_Xty = np.stack([X.T @ y for X, y in groups])
        self.group_Xsum = np.stack([X.sum(axis=0) for X, _ in groups])
        self.group_ysum = np.array([y.sum() for _, y in groups])

    @classmethod
    def from_arrays(cls, X, y, group) -> "HlmData":
        """Split stacked arrays by a group label vector (labels kept in first-seen order)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        group = np.asarray(group)
        labels = list(dict.fromkeys(group.tolist()))
        groups = [(X[group == g], y[group == g]) for g in labels]
        return cls(groups, [str(g) for g in labels])

    @property
    def m(self) -> int:
        return len(self.groups)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n(self) -> int:
        return self.y.size


@dataclass
class HlmHyperparams:
    """Prior settings for the three regression models.

    Models 1 and 2 use ``coef_mean``/``coef_cov`` for the coefficient prior and
    ``sigma2_df``/``sigma2_scale`` for ``sigma2 ~ IG(df/2, df*scale/2)``; model 2
    adds ``tau2_df``/``tau2_scale`` for the random-intercept variance.

    In model 3 ``coef_mean``/``coef_cov`` are the prior of the population
    coefficient mean, ``between_df``/``between_scale`` the inverse-Wishart prior
    of the between-group covariance, ``nu_rate`` the exponential prior rate of
    the variance-pooling degrees of freedom and ``sigma2_shape``/``sigma2_rate``
    the Gamma prior of the pooled variance.
    """

    model_id: int
    coef_mean: np.ndarray
    coef_cov: np.ndarray
    sigma2_df: float | None = None
    sigma2_scale: float | None = None
    tau2_df: float | None = None
    tau2_scale: float | None = None
    between_df: float | None = None
    between_scale: np.ndarray | None = None
    nu_rate: float | None = None
    sigma2_shape: float | None = None
    sigma2_rate: float | None = None

    def __post_init__(self):
        if self.model_id not in (1, 2, 3):
            raise DomainError(f"model_id must be 1, 2 or 3, got {self.model_id}")
        self.coef_mean = np.asarray(self.coef_mean, dtype=float)
        self.coef_cov = np.atleast_2d(np.asarray(self.coef_cov, dtype=float))
        p = self.coef_mean.size
        if self.coef_cov.shape != (p, p):
            raise DomainError("coef_cov must be p x p")
        rand.cholesky_spd(self.coef_cov, "coef_cov")
        need = {
            1: ["sigma2_df", "sigma2_scale"],
            2: ["sigma2_df", "sigma2_scale", "tau2_df", "tau2_scale"],
            3: ["tau2_df", "tau2_scale", "between_df", "nu_rate", "sigma2_shape", "sigma2_rate"],
        }[self.model_id]
        for name in need:
            value = getattr(self, name)
            if value is None or not value > 0:
                raise DomainError(f"model {self.model_id} requires {name} > 0")
        if self.model_id == 3:
            self.between_scale = np.atleast_2d(np.asarray(self.between_scale, dtype=float))
            if self.between_scale.shape != (p, p):
                raise DomainError("between_scale must be p x p")
            rand.cholesky_spd(self.between_scale, "between_scale")
            if not self.between_df > p - 1:
                raise DomainError(f"between_df must exceed p-1 = {p - 1}")

    @property
    def p(self) -> int:
        return self.coef_mean.size


def unit_information_config(model_id: int, design, y, sigma2_rate: float | None = None) -> HlmHyperparams:
    """Unit-information priors centred on the pooled OLS fit.

    The coefficient prior covariance is ``n * s2 * (X^T X)^-1``, i.e. the
    sampling covariance of the OLS estimate inflated to one observation's worth
    of information; variance priors are centred at the OLS residual variance.

    For model 3 the Gamma prior of the pooled variance gets rate ``s2`` unless
    ``sigma2_rate`` is given (``1 / s2`` centres that prior at ``s2``).
    """
    X = np.atleast_2d(np.asarray(design, dtype=float))
    n = X.shape[0]
    beta_hat, s2 = ols_estimates(X, y)
    cov = n * s2 * np.linalg.inv(X.T @ X)
    cov = 0.5 * (cov + cov.T)
    if model_id == 1:
        return HlmHyperparams(1, beta_hat, cov, sigma2_df=1.0, sigma2_scale=s2)
    if model_id == 2:
        return HlmHyperparams(
            2, beta_hat, cov, sigma2_df=1.0, sigma2_scale=s2, tau2_df=1.0, tau2_scale=s2
        )
    if model_id == 3:
        return HlmHyperparams(
            3,
            beta_hat,
            cov,
            tau2_df=1.0,
            tau2_scale=s2,
            between_df=5.0,
            between_scale=cov.copy(),
            nu_rate=1.0,
            sigma2_shape=1.0,
            sigma2_rate=s2 if sigma2_rate is None else sigma2_rate,
        )
    raise DomainError(f"model_id must be 1, 2 or 3, got {model_id}")


@dataclass
class HlmState:
    """Current values of every unknown of a regression model (unused fields stay ``None``)."""

    beta: np.ndarray
    sigma2: float
    theta: np.ndarray | None = None
    tau2: float | None = None
    group_beta: np.ndarray | None = None
    between_cov: np.ndarray | None = None
    group_sigma2: np.ndarray | None = None
    nu: int | None = None

    def copy(self) -> "HlmState":
        return replace(
            self,
            **{
                k: (v.copy() if isinstance(v, np.ndarray) else v)
                for k, v in self.__dict__.items()
            },
        )


class HlmLayout:
    """Maps an :class:`HlmState` to a flat parameter row and back."""

    def __init__(self, model_id: int, p: int, m: int):
        self.model_id, self.p, self.m = model_id, p, m
        names = [f"beta[{k + 1}]" for k in range(p)] + ["sigma2"]
        if model_id >= 2:
            names.append("tau2")
        if model_id == 3:
            names.append("nu")
            self.tri = np.triu_indices(p)
            names += [f"Sigma[{a + 1},{b + 1}]" for a, b in zip(*self.tri)]
        if model_id >= 2:
            names += [f"theta[{j + 1}]" for j in range(m)]
        if model_id == 3:
            names += [f"group_sigma2[{j + 1}]" for j in range(m)]
            names += [f"group_beta[{j + 1},{k + 1}]" for j in range(m) for k in range(p)]
        self.names = names
        self.index = {name: i for i, name in enumerate(names)}

    @property
    def size(self) -> int:
        return len(self.names)

    def pack(self, s: HlmState) -> np.ndarray:
        parts = [np.asarray(s.beta, dtype=float), [s.sigma2]]
        if self.model_id >= 2:
            parts.append([s.tau2])
        if self.model_id == 3:
            parts.append([s.nu])
            parts.append(s.between_cov[self.tri])
        if self.model_id >= 2:
            parts.append(s.theta)
        if self.model_id == 3:
            parts.append(s.group_sigma2)
            parts.append(np.asarray(s.group_beta).ravel())
        return np.concatenate([np.asarray(x, dtype=float).ravel() for x in parts])

    def columns(self, draws, prefix: str) -> np.ndarray:
        draws = np.atleast_2d(draws)
        idx = [i for i, name in enumerate(self.names) if name.startswith(prefix + "[") or name == prefix]
        return draws[:, idx]

    def unpack(self, row) -> HlmState:
        row = np.asarray(row, dtype=float)
        p, m = self.p, self.m
        i = p + 1
        s = HlmState(beta=row[:p].copy(), sigma2=float(row[p]))
        if self.model_id >= 2:
            s.tau2 = float(row[i])
            i += 1
        if self.model_id == 3:
            s.nu = int(round(row[i]))
            i += 1
            ntri = len(self.tri[0])
            S = np.zeros((p, p))
            S[self.tri] = row[i : i + ntri]
            s.between_cov = S + np.triu(S, 1).T
            i += ntri
        if self.model_id >= 2:
            s.theta = row[i : i + m].copy()
            i += m
        if self.model_id == 3:
            s.group_sigma2 = row[i : i + m].copy()
            i += m
            s.group_beta = row[i : i + m * p].reshape(m, p).copy()
        return s

    def mean_and_var(self, draws, data: HlmData):
        """Per-observation Normal mean and variance for each draw (arrays ``B x n``)."""
        draws = np.atleast_2d(draws)
        p, m = self.p, self.m
        g = data.group_index
        if self.model_id == 1:
            mu = draws[:, :p] @ data.X.T
            var = np.broadcast_to(draws[:, [p]], mu.shape)
            return mu, var
        theta = draws[:, self.index["theta[1]"] : self.index["theta[1]"] + m]
        if self.model_id == 2:
            mu = draws[:, :p] @ data.X.T + theta[:, g]
            var = np.broadcast_to(draws[:, [p]], mu.shape)
            return mu, var
        s2j = draws[:, self.index["group_sigma2[1]"] : self.index["group_sigma2[1]"] + m]
        start = self.index["group_beta[1,1]"]
        bj = draws[:, start : start + m * p].reshape(-1, m, p)
        mu = np.einsum("bnk,nk->bn", bj[:, g, :], data.X) + theta[:, g]
        return mu, s2j[:, g]


def hlm_pointwise_loglik(layout: HlmLayout, data: HlmData, draws) -> np.ndarray:
    """``log N(y_i | mean_b(i), var_b(i))`` for each draw ``b`` and observation ``i``.

    Conditions on the group-level parameters (theta, group coefficients and
    variances) of each draw.
    """
    mu, var = layout.mean_and_var(draws, data)
    return -0.5 * (rand.LOG_2PI + np.log(var)) - 0.5 * (data.y - mu) ** 2 / var


def hlm_loglik(layout: HlmLayout, data: HlmData, row) -> float:
    return float(hlm_pointwise_loglik(layout, data, np.atleast_2d(row)).sum())


def hlm_marginal_group_loglik(layout: HlmLayout, data: HlmData, draws) -> np.ndarray:
    """``log p(y_j | ...)`` per draw and group with the random effects integrated out.

    Model 2 integrates ``theta_j``; model 3 integrates ``theta_j`` and ``beta_j``,
    so ``y_j ~ N(X_j beta, s I + U V U^T)`` with ``U = [X_j, 1]`` and
    ``V = blockdiag(Sigma, tau2)``. Covariances are handled through the
    Woodbury identity on per-group cross products. Model 1 has no random
    effects and returns the conditional log-likelihood summed by group.
    """
    draws = np.atleast_2d(draws)
    if layout.model_id == 1:
        point = hlm_pointwise_loglik(layout, data, draws)
        return np.stack([np.bincount(data.group_index, weights=row, minlength=data.m) for row in point])
    p, m = layout.p, layout.m
    beta = draws[:, :p]
    tau2 = draws[:, layout.index["tau2"]]
    yy = np.array([y @ y for _, y in data.groups])
    # r = y_j - X_j beta; its cross products with itself and with U
    rr = yy[None] - 2 * beta @ data.group_Xty.T + np.einsum("bk,jkl,bl->bj", beta, data.group_XtX, beta)
    if layout.model_id == 2:
        s = np.broadcast_to(draws[:, [p]], rr.shape)
        UtU = data.sizes.astype(float)[None, :, None, None]
        Utr = (data.group_ysum[None] - beta @ data.group_Xsum.T)[:, :, None]
        Vinv = (1.0 / tau2)[:, None, None, None]
        logdetV = np.log(tau2)[:, None]
    else:
        s = layout.columns(draws, "group_sigma2")
        q = p + 1
        UtU = np.zeros((m, q, q))
        UtU[:, :p, :p] = data.group_XtX
        UtU[:, :p, p] = UtU[:, p, :p] = data.group_Xsum
        UtU[:, p, p] = data.sizes
        UtU = UtU[None]
        Uty = np.concatenate([data.group_Xty, data.group_ysum[:, None]], axis=1)
        Utr = Uty[None] - np.einsum("jqk,bk->bjq", UtU[0][:, :, :p], beta)
        B = draws.shape[0]
        Sigma = np.empty((B, p, p))
        tri = layout.tri
        start = layout.index["Sigma[1,1]"]
        vals = draws[:, start : start + len(tri[0])]
        Sigma[:, tri[0], tri[1]] = vals
        Sigma[:, tri[1], tri[0]] = vals
        V = np.zeros((B, q, q))
        V[:, :p, :p] = Sigma
        V[:, p, p] = tau2
        sign, logdetV = np.linalg.slogdet(V)
        if np.any(sign <= 0):
            raise DomainError("between-group covariance is not positive definite")
        Vinv = np.linalg.inv(V)[:, None]
        logdetV = logdetV[:, None]
    n = data.sizes[None].astype(float)
    inner = Vinv + UtU / s[:, :, None, None]
    sign, logdet_inner = np.linalg.slogdet(inner)
    solved = np.linalg.solve(inner, (Utr / s[:, :, None])[..., None])[..., 0]
    quad = rr / s - np.einsum("bjq,bjq->bj", Utr / s[:, :, None], solved)
    logdet = n * np.log(s) + logdetV + logdet_inner
    return -0.5 * (n * rand.LOG_2PI + logdet + quad)


def hlm_log_posterior(hyper: HlmHyperparams, data: HlmData, state: HlmState) -> float:
    """Unnormalized joint log posterior of a regression model, built from prior log-densities.

    Used as a reference when checking the closed-form full conditionals.
    """
    layout = HlmLayout(hyper.model_id, data.p, data.m)
    lp = hlm_loglik(layout, data, layout.pack(state))
    if hyper.model_id in (1, 2):
        lp += rand.MultivariateNormal(hyper.coef_mean, hyper.coef_cov).logpdf(state.beta)
        lp += rand.InverseGamma(hyper.sigma2_df / 2, hyper.sigma2_df * hyper.sigma2_scale / 2).logpdf(
            state.sigma2
        )
    if hyper.model_id >= 2:
        lp += rand.Normal(0.0, state.tau2).logpdf(state.theta).sum()
        lp += rand.InverseGamma(hyper.tau2_df / 2, hyper.tau2_df * hyper.tau2_scale / 2).logpdf(state.tau2)
    if hyper.model_id == 3:
        lp += rand.MultivariateNormal(state.beta, state.between_cov).logpdf(state.group_beta).sum()
        lp += rand.MultivariateNormal(hyper.coef_mean, hyper.coef_cov).logpdf(state.beta)
        lp += rand.InverseWishart(hyper.between_df, hyper.between_scale).logpdf(state.between_cov)
        nu = state.nu
        lp += rand.InverseGamma(nu / 2, nu * state.sigma2 / 2).logpdf(state.group_sigma2).sum()
        lp += -hyper.nu_rate * nu
        lp += rand.Gamma(hyper.sigma2_shape, hyper.sigma2_rate).logpdf(state.sigma2)
    return float(lp)
