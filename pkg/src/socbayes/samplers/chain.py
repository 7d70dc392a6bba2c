"""Iteration schedules and the container for sampler output."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError


@dataclass(frozen=True)
class Schedule:
    """``iterations`` counts every sweep including burn-in.

    Iteration ``b`` (1-based) is kept when ``b > burn_in`` and
    ``(b - burn_in) % thin == 0``.
    """

    iterations: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1 or self.burn_in < 0 or self.thin < 1:
            raise DomainError("need iterations >= 1, burn_in >= 0, thin >= 1")
        if self.seed < 0:
            raise DomainError("seed must be non-negative")
        if self.retained < 1:
            raise DomainError(
                f"schedule keeps no draws: iterations={self.iterations}, "
                f"burn_in={self.burn_in}, thin={self.thin}"
            )

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def keep(self, b: int) -> bool:
        return b > self.burn_in and (b - self.burn_in) % self.thin == 0

    def kept_iterations(self) -> np.ndarray:
        return self.burn_in + self.thin * np.arange(1, self.retained + 1)


@dataclass
class Chain:
    """Retained draws of one chain plus acceptance bookkeeping.

    ``accepted``/``proposed`` cover the post-burn-in iterations only.
    ``rejected_nonfinite`` counts proposals or trajectories rejected because the
    target or its gradient was not finite.
    """

    draws: np.ndarray
    parameter_names: list
    accepted: int
    proposed: int
    schedule: Schedule
    stream_id: int = 0
    rejected_nonfinite: int = 0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.draws = np.atleast_2d(np.asarray(self.draws, dtype=float))
        if self.draws.shape[1] != len(self.parameter_names):
            raise DomainError("one parameter name per draws column is required")
        if not 0 <= self.accepted <= self.proposed:
            raise DomainError("need 0 <= accepted <= proposed")

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")

    @property
    def iterations(self) -> np.ndarray:
        return self.schedule.kept_iterations()

    def __getitem__(self, name: str) -> np.ndarray:
        return self.draws[:, self.parameter_names.index(name)]

    def __len__(self) -> int:
        return self.draws.shape[0]
