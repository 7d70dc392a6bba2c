"""Seeded random streams, variate generators and log-densities.

Every sampler in the package draws from a :class:`RandomStream`. A stream is
identified by ``(seed, stream_id)``; chains of one run share the seed and get
distinct stream ids, so they are independent yet reproducible.

Parameterizations follow the usual Bayesian-textbook conventions:

* ``Gamma(shape, rate)``          mean ``shape / rate``
* ``InverseGamma(shape, scale)``  density ``scale**shape / Gamma(shape) x**-(shape+1) exp(-scale/x)``
* ``Normal(mean, var)``           variance, not standard deviation
* ``InverseWishart(df, scale)``   density proportional to
  ``|W|**-((df+d+1)/2) exp(-tr(scale W^-1)/2)``, mean ``scale / (df-d-1)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, multigammaln

from .errors import DecompositionError, DomainError

LOG_2PI = math.log(2.0 * math.pi)


class RandomStream:
    """A reproducible stream of variates owned by one chain.

    Wraps a PCG64 generator seeded from ``SeedSequence(seed, spawn_key=(stream_id,))``.
    Attribute access falls through to the underlying :class:`numpy.random.Generator`.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise DomainError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __getattr__(self, name):
        return getattr(self.generator, name)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id})"

    def substream(self, k: int) -> "RandomStream":
        """An independent stream derived from this one's identity."""
        child = RandomStream.__new__(RandomStream)
        child.seed = self.seed
        child.stream_id = self.stream_id
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, int(k) + 1))
        child.generator = np.random.Generator(np.random.PCG64(ss))
        return child


def as_stream(rng) -> RandomStream:
    if isinstance(rng, RandomStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RandomStream(int(rng))
    raise TypeError(f"expected RandomStream or int seed, got {type(rng).__name__}")


# ---------------------------------------------------------------------------
# Variate generation
# ---------------------------------------------------------------------------


def sample_gamma(shape, rate, rng: RandomStream, size=None):
    """Draw from ``Gamma(shape, rate)``.

    The unit-rate variate comes from numpy's Marsaglia-Tsang squeeze sampler,
    which applies the ``U**(1/shape)`` boost for ``shape < 1``.
    """
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(~(shape > 0)) or np.any(~(rate > 0)):
        raise DomainError(f"Gamma requires shape>0 and rate>0, got shape={shape}, rate={rate}")
    out = rng.standard_gamma(shape, size=size) / rate
    return float(out) if np.ndim(out) == 0 else out


def sample_inverse_gamma(shape, scale, rng: RandomStream, size=None):
    """Draw from ``InverseGamma(shape, scale)`` as the reciprocal of a Gamma(shape, scale) draw."""
    shape = np.asarray(shape, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if np.any(~(shape > 0)) or np.any(~(scale > 0)):
        raise DomainError(f"InverseGamma requires shape>0 and scale>0, got {shape}, {scale}")
    out = scale / rng.standard_gamma(shape, size=size)
    return float(out) if np.ndim(out) == 0 else out


def sample_normal(mean, var, rng: RandomStream, size=None):
    var = np.asarray(var, dtype=float)
    if np.any(~(var > 0)):
        raise DomainError(f"Normal requires var>0, got {var}")
    z = rng.standard_normal(size=size if size is not None else np.shape(var + np.asarray(mean)))
    out = mean + np.sqrt(var) * z
    return float(out) if np.ndim(out) == 0 else out


def sample_dirichlet(alpha, rng: RandomStream, size: int | None = None) -> np.ndarray:
    """Draw a Dirichlet vector by normalizing independent unit-rate Gamma variates.

    ``size`` adds a leading axis of independent draws.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size < 2:
        raise DomainError("Dirichlet needs a vector of at least two concentrations")
    if np.any(~(alpha > 0)):
        raise DomainError(f"Dirichlet concentrations must be positive, got {alpha}")
    shape = alpha.shape if size is None else (size,) + alpha.shape
    g = rng.standard_gamma(np.broadcast_to(alpha, shape))
    total = g.sum(axis=-1, keepdims=True)
    # tiny concentrations can underflow every component to zero
    bad = ~(total[..., 0] > 0)
    if np.any(bad):
        g[bad] = 0.0
        g[bad, np.argmax(alpha)] = 1.0
        total = g.sum(axis=-1, keepdims=True)
    return g / total


def _jittered(cov: np.ndarray) -> np.ndarray:
    d = cov.shape[-1]
    ridge = 1e-10 * np.trace(cov, axis1=-2, axis2=-1) / d
    return cov + np.asarray(ridge)[..., None, None] * np.eye(d)


def cholesky_spd(mat, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor, retrying once with a ``1e-10 * trace / d`` ridge."""
    mat = np.asarray(mat, dtype=float)
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(_jittered(mat))
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"{name} is not symmetric positive definite") from exc


def sample_mvnormal(mean, cov, rng: RandomStream) -> np.ndarray:
    """Draw from ``N_d(mean, cov)`` as ``mean + L z`` with ``cov = L L^T``."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (mean.size, mean.size):
        raise DomainError(f"covariance shape {cov.shape} does not match mean length {mean.size}")
    L = cholesky_spd(cov, "covariance")
    return mean + L @ rng.standard_normal(mean.size)


def sample_mvnormal_precision(linear, precision, rng: RandomStream, name: str = "precision"):
    """Draw from ``N(Q^-1 b, Q^-1)`` given ``b = linear`` and ``Q = precision``.

    Accepts stacked inputs of shape ``(..., d)`` and ``(..., d, d)``; this is the
    form every Gaussian full conditional of the regression models takes.
    """
    linear = np.asarray(linear, dtype=float)
    Q = np.asarray(precision, dtype=float)
    L = cholesky_spd(Q, name)
    z = rng.standard_normal(linear.shape)
    # mean = L^-T L^-1 b ; noise = L^-T z
    w = np.linalg.solve(L, linear[..., None])
    return np.linalg.solve(np.swapaxes(L, -1, -2), w + z[..., None])[..., 0]


def sample_wishart(df: float, scale, rng: RandomStream) -> np.ndarray:
    """Bartlett construction of ``Wishart(df, scale)`` (mean ``df * scale``)."""
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    d = scale.shape[0]
    if not df > d - 1:
        raise DomainError(f"Wishart requires df > d-1 = {d - 1}, got {df}")
    L = cholesky_spd(scale, "Wishart scale")
    A = np.zeros((d, d))
    A[np.diag_indices(d)] = np.sqrt(2.0 * rng.standard_gamma((df - np.arange(d)) / 2.0))
    rows, cols = np.tril_indices(d, -1)
    A[rows, cols] = rng.standard_normal(rows.size)
    LA = L @ A
    return LA @ LA.T


def sample_inverse_wishart(df: float, scale, rng: RandomStream) -> np.ndarray:
    """Draw ``W ~ InverseWishart(df, scale)`` by inverting a ``Wishart(df, scale^-1)`` draw."""
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    d = scale.shape[0]
    if not df > d - 1:
        raise DomainError(f"InverseWishart requires df > d-1 = {d - 1}, got {df}")
    Ls = cholesky_spd(scale, "InverseWishart scale")
    # scale^-1 = Ls^-T Ls^-1; the Wishart(df, I) core is orthogonally invariant,
    # so Ls^-T serves as the Bartlett factor even though it is upper triangular
    A = np.zeros((d, d))
    A[np.diag_indices(d)] = np.sqrt(2.0 * rng.standard_gamma((df - np.arange(d)) / 2.0))
    rows, cols = np.tril_indices(d, -1)
    A[rows, cols] = rng.standard_normal(rows.size)
    # W^-1 ~ Wishart = (Linv_T A)(Linv_T A)^T  =>  W = (A^-1 Ls^T)^T (A^-1 Ls^T)
    F = np.linalg.solve(A, Ls.T)
    W = F.T @ F
    return 0.5 * (W + W.T)


# ---------------------------------------------------------------------------
# Distribution specs and log-densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Gamma:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError("Gamma requires shape>0 and rate>0")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.shape, self.rate
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a * np.log(b) - gammaln(a) + (a - 1) * np.log(x) - b * x
        return _finish(np.where(x > 0, out, -np.inf))

    def sample(self, rng, size=None):
        return sample_gamma(self.shape, self.rate, rng, size)


@dataclass(frozen=True)
class InverseGamma:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise DomainError("InverseGamma requires shape>0 and scale>0")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.shape, self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a * np.log(b) - gammaln(a) - (a + 1) * np.log(x) - b / x
        return _finish(np.where(x > 0, out, -np.inf))

    def sample(self, rng, size=None):
        return sample_inverse_gamma(self.shape, self.scale, rng, size)


@dataclass(frozen=True)
class Normal:
    mean: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise DomainError("Normal requires var>0")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return _finish(-0.5 * (LOG_2PI + np.log(self.var)) - 0.5 * (x - self.mean) ** 2 / self.var)

    def sample(self, rng, size=None):
        return sample_normal(self.mean, self.var, rng, size)


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        if not self.high > self.low:
            raise DomainError("Uniform requires high > low")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.low) & (x <= self.high)
        return _finish(np.where(inside, -math.log(self.high - self.low), -np.inf))

    def sample(self, rng, size=None):
        return rng.uniform(self.low, self.high, size=size)


@dataclass(frozen=True)
class Poisson:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError("Poisson requires rate>0")

    def logpdf(self, k):
        k = np.asarray(k, dtype=float)
        ok = (k >= 0) & (k == np.floor(k))
        kk = np.where(ok, k, 0.0)
        out = kk * math.log(self.rate) - self.rate - gammaln(kk + 1)
        return _finish(np.where(ok, out, -np.inf))

    def sample(self, rng, size=None):
        return rng.poisson(self.rate, size=size)


@dataclass(frozen=True)
class Dirichlet:
    alpha: tuple

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 1 or a.size < 2 or np.any(~(a > 0)):
            raise DomainError("Dirichlet requires at least two positive concentrations")
        object.__setattr__(self, "alpha", tuple(float(v) for v in a))

    def logpdf(self, x):
        a = np.asarray(self.alpha)
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != a.size:
            raise DomainError("point dimension does not match concentration vector")
        on_simplex = np.all(x >= 0, axis=-1) & (np.abs(x.sum(axis=-1) - 1.0) < 1e-9)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(a - 1 == 0, 0.0, (a - 1) * np.log(x))
        out = gammaln(a.sum()) - gammaln(a).sum() + terms.sum(axis=-1)
        return _finish(np.where(on_simplex, out, -np.inf))

    def sample(self, rng, size=None):
        return sample_dirichlet(self.alpha, rng, size)


@dataclass(frozen=True)
class MultivariateNormal:
    mean: np.ndarray
    cov: np.ndarray = field(repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size) or not np.allclose(cov, cov.T):
            raise DomainError("MultivariateNormal requires a symmetric d x d covariance")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", cholesky_spd(cov, "covariance"))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        L = self._chol
        d = self.mean.size
        dev = np.atleast_2d(x - self.mean)
        z = np.linalg.solve(L, dev.T)
        out = -0.5 * d * LOG_2PI - np.log(np.diag(L)).sum() - 0.5 * (z**2).sum(axis=0)
        return _finish(out if x.ndim > 1 else out[0])

    def sample(self, rng, size=None):
        if size is None:
            return sample_mvnormal(self.mean, self.cov, rng)
        z = rng.standard_normal((size, self.mean.size))
        return self.mean + z @ self._chol.T


@dataclass(frozen=True)
class InverseWishart:
    df: float
    scale: np.ndarray = field(repr=False)

    def __post_init__(self):
        scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        d = scale.shape[0]
        if not self.df > d - 1:
            raise DomainError(f"InverseWishart requires df > d-1 = {d - 1}")
        if scale.shape != (d, d) or not np.allclose(scale, scale.T):
            raise DomainError("InverseWishart scale must be a symmetric square matrix")
        cholesky_spd(scale, "InverseWishart scale")
        object.__setattr__(self, "scale", scale)

    def logpdf(self, W):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        S = self.scale
        d = S.shape[0]
        nu = self.df
        try:
            LW = np.linalg.cholesky(W)
        except np.linalg.LinAlgError:
            return -np.inf
        logdet_W = 2.0 * np.log(np.diag(LW)).sum()
        logdet_S = np.linalg.slogdet(S)[1]
        tr = np.trace(np.linalg.solve(W, S))
        log_norm = 0.5 * nu * logdet_S - 0.5 * nu * d * math.log(2.0) - multigammaln(0.5 * nu, d)
        return float(log_norm - 0.5 * (nu + d + 1) * logdet_W - 0.5 * tr)

    def sample(self, rng, size=None):
        if size is None:
            return sample_inverse_wishart(self.df, self.scale, rng)
        return np.stack([sample_inverse_wishart(self.df, self.scale, rng) for _ in range(size)])


def _finish(out):
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


DistributionSpec = Gamma | InverseGamma | Normal | Uniform | Poisson | Dirichlet | MultivariateNormal | InverseWishart


def log_density(spec, point):
    """Natural-log density of ``spec`` at ``point``; ``-inf`` outside the support."""
    return spec.logpdf(point)
