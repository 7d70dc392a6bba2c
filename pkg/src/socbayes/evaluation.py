"""Information criteria and posterior predictive p-values."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DataError, DomainError


@dataclass
class EvaluationReport:
    dic: float
    p_dic: float
    waic: float
    lppd: float
    p_waic: float

    def to_dict(self) -> dict:
        return dict(dic=self.dic, p_dic=self.p_dic, waic=self.waic, lppd=self.lppd, p_waic=self.p_waic)


@dataclass
class PppReport:
    statistic: str
    observed: float
    replicated: np.ndarray
    ppp: float


def _anchored_mean(values, axis=0):
    """Mean computed as ``first + mean(values - first)``; exact when all values are equal."""
    values = np.asarray(values, dtype=float)
    ref = np.take(values, 0, axis=axis)
    return ref + np.mean(values - np.expand_dims(ref, axis), axis=axis)


def dic(loglik_at: Callable, draws):
    """Deviance information criterion.

    ``loglik_at(theta)`` returns the total log-likelihood ``log p(y | theta)``;
    it is evaluated at every draw and at the posterior mean.
    Returns ``(dic, p_dic)``.
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if draws.shape[0] == 0:
        raise DomainError("no draws")
    at_mean = float(loglik_at(_anchored_mean(draws)))
    if not np.isfinite(at_mean):
        raise DataError("log-likelihood at the posterior mean is not finite")
    mean_ll = float(_anchored_mean([loglik_at(row) for row in draws]))
    p_dic = 2.0 * (at_mean - mean_ll)
    return -2.0 * at_mean + 2.0 * p_dic, p_dic


class WaicAccumulator:
    """Streams draws through the WAIC sums so the full ``B x n`` matrix never has to exist.

    Per observation it keeps a running maximum with the matching sum of
    ``exp(x - max)``, and a sum of deviations from the first draw's value.
    """

    def __init__(self):
        self.count = 0
        self._top = None
        self._sum_exp = None
        self._ref = None
        self._dev = None

    def update(self, chunk) -> None:
        chunk = np.atleast_2d(np.asarray(chunk, dtype=float))
        if np.any(chunk == np.inf) or np.any(np.isnan(chunk)):
            raise DomainError("pointwise log-likelihood contains +inf or nan")
        if self._top is None:
            self._top = np.full(chunk.shape[1], -np.inf)
            self._sum_exp = np.zeros(chunk.shape[1])
            self._ref = chunk[0].copy()
            self._dev = np.zeros(chunk.shape[1])
        top = np.maximum(self._top, chunk.max(axis=0))
        safe = np.where(np.isfinite(top), top, 0.0)
        with np.errstate(invalid="ignore"):
            self._sum_exp = self._sum_exp * np.exp(self._top - safe) + np.exp(chunk - safe).sum(axis=0)
            self._dev = self._dev + (chunk - self._ref).sum(axis=0)
        self._sum_exp = np.nan_to_num(self._sum_exp, nan=0.0)
        self._top = top
        self.count += chunk.shape[0]

    def result(self):
        if not self.count:
            raise DomainError("no draws")
        dead = np.flatnonzero(~np.isfinite(self._top))
        if dead.size:
            raise DataError(f"observation {dead[0]} has zero likelihood under every draw")
        log_mean = self._top + np.log(self._sum_exp / self.count)
        with np.errstate(invalid="ignore"):
            mean_log = self._ref + self._dev / self.count
        # columns with some -inf entries get an unbounded penalty
        mean_log = np.where(np.isnan(mean_log), -np.inf, mean_log)
        lppd = float(log_mean.sum())
        p_waic = float(2.0 * np.sum(log_mean - mean_log))
        return -2.0 * lppd + 2.0 * p_waic, lppd, p_waic


def waic(pointwise):
    """Widely applicable information criterion from a ``B x n`` matrix of ``log p(y_i | theta_b)``.

    Returns ``(waic, lppd, p_waic)``.
    """
    acc = WaicAccumulator()
    acc.update(pointwise)
    return acc.result()


def posterior_predictive_p(
    draws,
    replicate: Callable,
    statistic: Callable,
    observed,
    rng,
    name: str = "t",
) -> PppReport:
    """Fraction of replicated datasets whose statistic strictly exceeds the observed one.

    ``replicate(theta, rng)`` simulates one dataset for each retained draw.
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if draws.shape[0] < 100:
        raise DomainError("posterior predictive p-values need at least 100 draws")
    t_obs = float(statistic(observed))
    t_rep = np.empty(draws.shape[0])
    for b, theta in enumerate(draws):
        t_rep[b] = statistic(replicate(theta, rng))
    if not np.all(np.isfinite(t_rep)):
        raise DomainError(f"statistic {name!r} is not finite on some replicate")
    return PppReport(name, t_obs, t_rep, float(np.mean(t_rep > t_obs)))


def evaluate(loglik_at: Callable, pointwise_fn: Callable, draws, chunk: int = 500) -> EvaluationReport:
    """DIC and WAIC together; ``pointwise_fn(draw_block)`` yields a ``b x n`` block.

    The per-draw total log-likelihoods for DIC come from the same pointwise blocks.
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    at_mean = float(loglik_at(_anchored_mean(draws)))
    if not np.isfinite(at_mean):
        raise DataError("log-likelihood at the posterior mean is not finite")
    acc = WaicAccumulator()
    totals = []
    for start in range(0, draws.shape[0], chunk):
        block = pointwise_fn(draws[start : start + chunk])
        totals.append(block.sum(axis=1))
        acc.update(block)
    p_dic = 2.0 * (at_mean - float(_anchored_mean(np.concatenate(totals))))
    w, lppd, p_waic = acc.result()
    return EvaluationReport(-2.0 * at_mean + 2.0 * p_dic, p_dic, w, lppd, p_waic)
