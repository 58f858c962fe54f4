"""Metropolis-within-Gibbs sampling for initial conditions of locally interacting SDEs."""

from .brownian import BrownianStore, empty_store, sample_store
from .errors import AccuracyError, ContractViolation, DivergenceError, UnsupportedSchemeError
from .integrate import (
    LocalPatch,
    TrajectoryCache,
    commit_patch,
    em_full,
    em_local,
    rk4_full,
    rk4_local,
    solve_full,
    solve_local,
)
from .likelihood import ObservationModel, every_other, local_pm_log_ratio, ode_loglik, pm_loglik
from .model import ModelSpec, block_distance, linear_flow, lorenz96
from .prior import GaussianPrior, conditional_block_sample, lorenz96_equilibrium_prior, sample_prior
from .sampler import (
    ChainState,
    SamplerConfig,
    amwg_sweep,
    mwg_sweep,
    parallel_block_schedule,
    run_chain,
)

__version__ = "0.1.0"
