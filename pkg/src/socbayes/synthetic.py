"""Synthetic stand-ins for the sparrow-offspring and standardized-test datasets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .rand import RandomStream


@dataclass(frozen=True)
class SparrowParams:
    n: int = 52
    beta: tuple = (0.3, 0.8, -0.15)
    min_age: int = 1
    max_age: int = 6
    # variance / mean ratio of the counts; 1 gives Poisson counts
    dispersion: float = 1.0


@dataclass(frozen=True)
class SaberParams:
    groups: int = 25
    n: int = 2500
    beta: tuple = (50.0, 3.0, 9.0)
    sigma: float = 12.0
    tau2: float = 16.0
    # sd of group deviations for (intercept, sex, work) coefficients
    coef_sd: tuple = (0.0, 2.0, 3.0)
    # sd of log group standard deviations
    sigma_spread: float = 0.3
    p_male: float = 0.5
    p_not_working: float = 0.8


def sparrows(params: SparrowParams = SparrowParams(), seed: int = 0):
    """Ages uniform on ``min_age..max_age``; counts with log-rate ``b1 + b2 age + b3 age^2``.

    With ``dispersion > 1`` counts come from a Gamma-Poisson mixture whose
    variance is ``dispersion`` times the mean.
    """
    if params.n < 1 or params.max_age < params.min_age or params.min_age < 1:
        raise DomainError("need n >= 1 and 1 <= min_age <= max_age")
    if not params.dispersion >= 1:
        raise DomainError("dispersion must be >= 1")
    rng = RandomStream(seed)
    age = rng.integers(params.min_age, params.max_age + 1, size=params.n)
    b = np.asarray(params.beta, dtype=float)
    mu = np.exp(b[0] + b[1] * age + b[2] * age**2.0)
    if params.dispersion > 1:
        k = params.dispersion - 1.0
        mu = rng.gamma(mu / k, k)
    offspring = rng.poisson(mu)
    return offspring.astype(np.int64), age.astype(np.int64)


def saber11(params: SaberParams = SaberParams(), seed: int = 0):
    """Scores ``N(x.beta_j + theta_j, sigma_j^2)`` for students nested in groups.

    Group intercept offsets ``theta_j ~ N(0, tau2)``, coefficient deviations
    ``N(0, coef_sd^2)`` and log-normal spread of group standard deviations.
    Returns ``(score, sex, work, department)``; every group gets at least 8 rows.
    """
    m, n = params.groups, params.n
    if m < 1 or n < 8 * m:
        raise DomainError("need at least one group and 8 rows per group")
    if params.tau2 < 0 or params.sigma <= 0 or params.sigma_spread < 0:
        raise DomainError("variance parameters must be non-negative (sigma positive)")
    rng = RandomStream(seed)
    extra = rng.multinomial(n - 8 * m, np.full(m, 1.0 / m))
    sizes = 8 + extra
    group = np.repeat(np.arange(m), sizes)
    sex = (rng.random(n) < params.p_male).astype(np.int64)
    work = (rng.random(n) < params.p_not_working).astype(np.int64)
    X = np.column_stack([np.ones(n), sex, work])
    theta = rng.normal(0.0, np.sqrt(params.tau2), m)
    coef = np.asarray(params.beta, dtype=float) + rng.normal(size=(m, 3)) * np.asarray(params.coef_sd, dtype=float)
    sd = params.sigma * np.exp(params.sigma_spread * rng.normal(size=m))
    mean = np.einsum("nk,nk->n", X, coef[group]) + theta[group]
    score = mean + sd[group] * rng.standard_normal(n)
    labels = np.array([f"D{j + 1:02d}" for j in range(m)])
    return score, sex, work, labels[group]
