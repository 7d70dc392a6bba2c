"""Effective sample size, Monte Carlo error, split R-hat and posterior summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DiagnosticsError

DEFAULT_PROBS = (0.025, 0.5, 0.975)


def autocorrelation(x) -> np.ndarray:
    """Biased sample autocorrelation at every lag, computed by FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def _check_series(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 10:
        raise DiagnosticsError(f"series too short for diagnostics ({x.size} < 10)")
    if not np.all(np.isfinite(x)):
        raise DiagnosticsError("series contains non-finite values")
    if np.ptp(x) == 0:
        raise DiagnosticsError("zero variance")
    return x


def integrated_autocorr_time(x) -> float:
    """``1 + 2 sum rho_t`` truncated by Geyer's initial monotone positive sequence."""
    x = _check_series(x)
    rho = autocorrelation(x)
    n = x.size
    # pair sums Gamma_k = rho_{2k} + rho_{2k+1}
    npairs = n // 2
    pairs = rho[: 2 * npairs].reshape(npairs, 2).sum(axis=1)
    positive = np.flatnonzero(pairs <= 0)
    stop = positive[0] if positive.size else npairs
    pairs = np.minimum.accumulate(pairs[:stop]) if stop else pairs[:0]
    tau = -1.0 + 2.0 * pairs.sum()
    # antithetic chains can push tau towards zero or below
    return max(tau, 1.0 / math.log10(n))


def effective_size(series) -> float:
    x = _check_series(series)
    return x.size / integrated_autocorr_time(x)


def mc_standard_error(series) -> float:
    x = _check_series(series)
    return float(x.std(ddof=1) / math.sqrt(effective_size(x)))


def split_rhat(chains) -> float:
    """Potential scale reduction over the first and second halves of every chain.

    The raw ratio dips below 1 by O(1/n) when the half means agree better than
    chance; it is floored at 1.
    """
    chains = [np.asarray(c, dtype=float).ravel() for c in chains]
    if not chains:
        raise DiagnosticsError("no chains supplied")
    n = min(c.size for c in chains)
    if n < 4:
        raise DiagnosticsError("each chain needs at least 4 draws")
    half = n // 2
    parts = []
    for c in chains:
        c = c[:n]
        parts += [c[:half], c[n - half :]]
    parts = np.stack(parts)
    within = parts.var(axis=1, ddof=1).mean()
    if not within > 0:
        raise DiagnosticsError("zero within-chain variance")
    between = half * parts.mean(axis=1).var(ddof=1)
    var_plus = (half - 1) / half * within + between / half
    return max(1.0, float(math.sqrt(var_plus / within)))


@dataclass
class ParameterSummary:
    mean: float
    sd: float
    quantiles: dict
    ess: float
    mc_se: float
    rhat: float

    def to_dict(self) -> dict:
        out = {"mean": self.mean, "sd": self.sd}
        for p, q in self.quantiles.items():
            out[quantile_key(p)] = q
        out.update(ess=self.ess, mcse=self.mc_se, rhat=self.rhat)
        return out


@dataclass
class DiagnosticsReport:
    parameters: dict = field(default_factory=dict)
    acceptance_rate: float = float("nan")

    def __getitem__(self, name) -> ParameterSummary:
        return self.parameters[name]

    def to_dict(self) -> dict:
        return {name: s.to_dict() for name, s in self.parameters.items()}


def quantile_key(p: float) -> str:
    """``0.025 -> 'q025'``, ``0.5 -> 'q50'``, ``0.995 -> 'q995'``."""
    digits = f"{p:.6f}".split(".")[1].rstrip("0")
    return "q" + (digits if len(digits) >= 2 else digits.ljust(2, "0"))


def summarize(chains, probs=DEFAULT_PROBS, names=None) -> DiagnosticsReport:
    """Posterior summary of one chain or several chains of the same parameters.

    ``chains`` is a :class:`~socbayes.samplers.Chain`, a list of them, or a list
    of 2-d draw arrays. Means, sds and type-7 quantiles pool all draws; ESS
    adds the per-chain values; R-hat uses split halves of every chain.
    """
    if not isinstance(chains, (list, tuple)):
        chains = [chains]
    arrays = [np.atleast_2d(getattr(c, "draws", c)) for c in chains]
    if names is None:
        names = getattr(chains[0], "parameter_names", None) or [f"x[{j + 1}]" for j in range(arrays[0].shape[1])]
    if any(a.shape[0] == 0 for a in arrays):
        raise DiagnosticsError("empty chain")
    probs = tuple(float(p) for p in probs)
    if any(not 0 < p < 1 for p in probs) or list(probs) != sorted(probs):
        raise DiagnosticsError("probabilities must be sorted and strictly inside (0, 1)")
    pooled = np.vstack(arrays)
    report = DiagnosticsReport()
    acc = [(c.accepted, c.proposed) for c in chains if hasattr(c, "accepted")]
    if acc and sum(p for _, p in acc):
        report.acceptance_rate = sum(a for a, _ in acc) / sum(p for _, p in acc)
    qs = np.quantile(pooled, probs, axis=0)
    for j, name in enumerate(names):
        col = pooled[:, j]
        sd = float(col.std(ddof=1)) if col.size > 1 else 0.0
        try:
            ess = float(sum(effective_size(a[:, j]) for a in arrays))
            mc_se = sd / math.sqrt(ess)
        except DiagnosticsError:
            ess, mc_se = float("nan"), 0.0 if sd == 0 else float("nan")
        try:
            rhat = split_rhat([a[:, j] for a in arrays])
        except DiagnosticsError:
            rhat = float("nan")
        report.parameters[name] = ParameterSummary(
            mean=float(col.mean()),
            sd=sd,
            quantiles={p: float(q) for p, q in zip(probs, qs[:, j])},
            ess=ess,
            mc_se=mc_se,
            rhat=rhat,
        )
    return report
