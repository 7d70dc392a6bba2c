from .chain import Chain, Schedule
from .gibbs import (
    DEFAULT_NU_GRID,
    run_gibbs,
    run_gibbs_hlm1,
    run_gibbs_hlm2,
    run_gibbs_hlm3,
    sample_nu_conditional,
)
from .mcmc import (
    CANONICAL,
    HALF_KICK,
    HmcConfig,
    MetropolisConfig,
    run_hmc,
    run_iid_dirichlet,
    run_metropolis,
)

__all__ = [
    "CANONICAL",
    "DEFAULT_NU_GRID",
    "HALF_KICK",
    "Chain",
    "HmcConfig",
    "MetropolisConfig",
    "Schedule",
    "run_gibbs",
    "run_gibbs_hlm1",
    "run_gibbs_hlm2",
    "run_gibbs_hlm3",
    "run_hmc",
    "run_iid_dirichlet",
    "run_metropolis",
    "sample_nu_conditional",
]
