"""IID Monte Carlo, random-walk Metropolis and Hamiltonian Monte Carlo."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import rand
from ..errors import DomainError, SamplerError
from .chain import Chain, Schedule

log = logging.getLogger(__name__)

CANONICAL = "canonical_leapfrog"
HALF_KICK = "half_kick"


def _stream(schedule: Schedule, stream_id: int, rng):
    return rng if rng is not None else rand.RandomStream(schedule.seed, stream_id)


def run_iid_dirichlet(alpha_post, schedule: Schedule, stream_id: int = 0, rng=None, names=None) -> Chain:
    """Independent Dirichlet draws; one draw per retained row."""
    rng = _stream(schedule, stream_id, rng)
    alpha_post = np.asarray(alpha_post, dtype=float)
    draws = rand.sample_dirichlet(alpha_post, rng, size=schedule.retained)
    names = names or [f"theta[{j + 1}]" for j in range(alpha_post.size)]
    n = schedule.retained
    return Chain(draws, list(names), n, n, schedule, stream_id)


@dataclass(frozen=True)
class MetropolisConfig:
    proposal_cov: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.proposal_cov, dtype=float))
        if not self.scale > 0:
            raise DomainError("proposal scale must be positive")
        object.__setattr__(self, "proposal_cov", cov)
        object.__setattr__(self, "_chol", rand.cholesky_spd(cov, "proposal covariance"))

    @classmethod
    def from_design(cls, design, c: float = 0.7) -> "MetropolisConfig":
        """Proposal covariance ``c * (X^T X)^-1``."""
        X = np.atleast_2d(np.asarray(design, dtype=float))
        cov = c * np.linalg.inv(X.T @ X)
        return cls(0.5 * (cov + cov.T), c)


def run_metropolis(
    log_density: Callable,
    config: MetropolisConfig,
    init,
    schedule: Schedule,
    stream_id: int = 0,
    rng=None,
    names=None,
) -> Chain:
    """Random-walk Metropolis with a fixed Gaussian proposal.

    The acceptance test compares ``log u`` against the log-ratio, so the ratio
    itself is never exponentiated.
    """
    rng = _stream(schedule, stream_id, rng)
    current = np.array(init, dtype=float)
    lp = float(log_density(current))
    if not np.isfinite(lp):
        raise SamplerError("log density is not finite at the initial value")
    k = current.size
    L = config._chol
    draws = np.empty((schedule.retained, k))
    accepted = proposed = nonfinite = 0
    row = 0
    for b in range(1, schedule.iterations + 1):
        proposal = current + L @ rng.standard_normal(k)
        lp_new = float(log_density(proposal))
        if not np.isfinite(lp_new):
            lp_new = -np.inf
            nonfinite += b > schedule.burn_in
        log_ratio = lp_new - lp
        take = np.log(rng.random()) < min(log_ratio, 0.0)
        if take:
            current, lp = proposal, lp_new
        if b > schedule.burn_in:
            proposed += 1
            accepted += bool(take)
            if (b - schedule.burn_in) % schedule.thin == 0:
                draws[row] = current
                row += 1
    names = names or [f"beta[{j + 1}]" for j in range(k)]
    return Chain(draws, list(names), accepted, proposed, schedule, stream_id, nonfinite)


@dataclass(frozen=True)
class HmcConfig:
    """Tuning of the Hamiltonian sampler.

    ``integrator``:
      * ``canonical_leapfrog`` half momentum step, ``L`` alternating full
        position/momentum steps, closing half momentum step; positions move by
        ``eps * M^-1 phi``.
      * ``half_kick`` ``L`` repetitions of a half momentum step followed by
        a full position step ``eps * M phi``, with no closing half step.

    ``momentum_sign=-1`` flips the sign of the gradient term in the momentum
    update (descending instead of ascending the log density).
    """

    leapfrog_steps: int = 100
    step_size: float = 0.01
    mass_diag: tuple | None = None
    integrator: str = CANONICAL
    momentum_sign: int = 1

    def __post_init__(self):
        if self.leapfrog_steps < 1 or not self.step_size > 0:
            raise DomainError("need leapfrog_steps >= 1 and step_size > 0")
        if self.integrator not in (CANONICAL, HALF_KICK):
            raise DomainError(f"unknown integrator {self.integrator!r}")
        if self.momentum_sign not in (1, -1):
            raise DomainError("momentum_sign must be +1 or -1")
        if self.mass_diag is not None:
            m = np.asarray(self.mass_diag, dtype=float)
            if np.any(~(m > 0)):
                raise DomainError("mass matrix diagonal must be positive")
            object.__setattr__(self, "mass_diag", tuple(m.tolist()))


def check_gradient(log_density, gradient, x, h: float = 1e-5, rtol: float = 1e-3) -> float:
    """Relative discrepancy between ``gradient`` and central differences at ``x``."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(gradient(x), dtype=float)
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        fd[i] = (log_density(x + e) - log_density(x - e)) / (2 * e[i])
    err = float(np.max(np.abs(g - fd) / np.maximum(1.0, np.abs(fd))))
    if not err <= rtol:
        raise SamplerError(f"gradient disagrees with finite differences (relative error {err:.2e})")
    return err


def hmc_trajectory(q, phi, gradient, config: HmcConfig, mass):
    """Integrate ``(q, phi)`` for ``L`` steps; returns ``None`` if anything goes non-finite."""
    eps = config.step_size
    sgn = config.momentum_sign
    L = config.leapfrog_steps
    q = q.copy()
    phi = phi.copy()
    if config.integrator == HALF_KICK:
        for _ in range(L):
            phi += sgn * 0.5 * eps * gradient(q)
            q += eps * mass * phi
        return (q, phi) if np.all(np.isfinite(phi)) and np.all(np.isfinite(q)) else None
    inv_mass = 1.0 / mass
    g = gradient(q)
    phi += sgn * 0.5 * eps * g
    for step in range(L):
        q += eps * inv_mass * phi
        g = gradient(q)
        if not np.all(np.isfinite(g)):
            return None
        phi += sgn * (eps if step < L - 1 else 0.5 * eps) * g
    return q, phi


def run_hmc(
    log_density: Callable,
    gradient: Callable,
    config: HmcConfig,
    init,
    schedule: Schedule,
    stream_id: int = 0,
    rng=None,
    names=None,
    validate_gradient: bool = True,
) -> Chain:
    """Hamiltonian Monte Carlo with momentum ``phi ~ N(0, diag(mass))``.

    The acceptance log-ratio is ``log p(q*) - log p(q) + log N(phi*|0,M) - log N(phi|0,M)``.
    """
    rng = _stream(schedule, stream_id, rng)
    current = np.array(init, dtype=float)
    k = current.size
    lp = float(log_density(current))
    if not np.isfinite(lp):
        raise SamplerError("log density is not finite at the initial value")
    if validate_gradient:
        check_gradient(log_density, gradient, current)
    mass = np.ones(k) if config.mass_diag is None else np.asarray(config.mass_diag, dtype=float)
    if mass.size != k:
        raise DomainError("mass matrix size does not match the parameter dimension")
    sd = np.sqrt(mass)
    draws = np.empty((schedule.retained, k))
    accepted = proposed = nonfinite = 0
    row = 0
    for b in range(1, schedule.iterations + 1):
        phi = sd * rng.standard_normal(k)
        out = hmc_trajectory(current, phi, gradient, config, mass)
        log_ratio = -np.inf
        if out is not None:
            q_new, phi_new = out
            lp_new = float(log_density(q_new))
            if np.isfinite(lp_new):
                log_ratio = lp_new - lp - 0.5 * np.sum(phi_new**2 / mass) + 0.5 * np.sum(phi**2 / mass)
        if not np.isfinite(log_ratio):
            nonfinite += b > schedule.burn_in
        take = np.log(rng.random()) < min(log_ratio, 0.0)
        if take:
            current, lp = q_new, lp_new
        if b > schedule.burn_in:
            proposed += 1
            accepted += bool(take)
            if (b - schedule.burn_in) % schedule.thin == 0:
                draws[row] = current
                row += 1
    names = names or [f"beta[{j + 1}]" for j in range(k)]
    chain = Chain(draws, list(names), accepted, proposed, schedule, stream_id, nonfinite)
    chain.info["integrator"] = config.integrator
    return chain
