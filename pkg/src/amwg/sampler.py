"""Metropolis-within-Gibbs chains with full or localized re-solves.

Each sweep visits the ``m`` blocks in order.  Block ``j`` is redrawn from its
prior conditional, so the Metropolis-Hastings ratio reduces to the
likelihood ratio.  The vanilla sampler re-solves the whole system for every
proposal.  The accelerated sampler re-solves only the blocks within radius
``L`` of ``j`` against the cached trajectories and patches the cache when the
proposal is accepted.

Random draws are consumed in the same order by both samplers (one
conditional draw then one uniform per proposal), so the accelerated sampler
with a torus-covering radius and the full ratio reproduces the vanilla chain
bit for bit.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .brownian import BrownianStore
from .integrate import (
    SCHEMES,
    LocalPatch,
    TrajectoryCache,
    assemble_terminal,
    commit_patch,
    solve_full,
    solve_local,
    time_steps,
)
from .likelihood import DEFAULT_OBS_WINDOW, ObservationModel, local_pm_log_ratio, pm_loglik
from .model import ModelSpec
from .prior import GaussianPrior, conditional_block_sample, sample_prior

log = logging.getLogger(__name__)

ACCEPTANCE_MODES = ("full", "local")


@dataclass
class SamplerConfig:
    """Run settings.  ``L=None`` selects the vanilla sampler."""

    K: int
    L: Optional[int] = None
    S: int = 1
    h: float = 0.01
    T: float = 0.4
    scheme: str = "em"
    acceptance: str = "full"
    obs_window: int = DEFAULT_OBS_WINDOW
    parallel: bool = False
    threads: int = 1
    seed: int = 0
    k0: Optional[int] = None
    random_scan: bool = False
    resync_every: int = 0
    refresh_noise: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be at least 1, got {self.K}")
        if self.S < 1:
            raise ValueError(f"S must be at least 1, got {self.S}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.acceptance not in ACCEPTANCE_MODES:
            raise ValueError(f"acceptance must be one of {ACCEPTANCE_MODES}, got {self.acceptance!r}")
        if self.L is not None and self.L < 0:
            raise ValueError(f"L must be nonnegative, got {self.L}")
        if self.L is None and (self.acceptance != "full" or self.parallel):
            raise ValueError("localized acceptance and parallel groups need a local radius L")
        if self.parallel and self.acceptance != "local":
            raise ValueError("parallel groups need localized acceptance")
        if self.k0 is None:
            self.k0 = self.K // 10
        if not 0 <= self.k0 < self.K:
            raise ValueError(f"burn-in k0={self.k0} must lie in [0, K={self.K})")
        if self.threads < 1:
            raise ValueError(f"threads must be at least 1, got {self.threads}")
        time_steps(self.h, self.T)

    @property
    def sampler(self) -> str:
        return "mwg" if self.L is None else "amwg"

    def validate_for(self, model: ModelSpec) -> None:
        if self.L is not None and self.L < model.m // 2 and 2 * self.L + 2 > model.m:
            raise ValueError(f"L={self.L} needs 2L+2 <= m={model.m} unless it covers the torus (L >= {model.m // 2})")
        if self.scheme == "rk4" and not model.is_ode:
            raise ValueError("rk4 needs a model without stochastic forcing")
        if self.parallel:
            parallel_block_schedule(model.m, self.L)


@dataclass(eq=False)
class ChainState:
    """Current iterate with its trajectory cache.

    ``log_lik`` is the pseudo-marginal log-likelihood of ``x`` computed from
    ``cache``.  Localized acceptance never evaluates the global likelihood,
    so in that mode it is left as ``None`` after an accepted move and
    recomputed on demand by :meth:`refresh_log_lik`.
    """

    x: np.ndarray
    cache: TrajectoryCache
    log_lik: Optional[float]
    accepted: np.ndarray
    proposed: np.ndarray

    def refresh_log_lik(self, obs: ObservationModel) -> float:
        self.log_lik = pm_loglik(obs, self.cache.terminal())
        return self.log_lik


def init_chain(model, x0, obs, store, h, T, scheme) -> ChainState:
    cache = solve_full(model, x0, store, h, T, scheme)
    return ChainState(
        x=model.check_state(x0).copy(),
        cache=cache,
        log_lik=pm_loglik(obs, cache.terminal()),
        accepted=np.zeros(model.m, dtype=np.int64),
        proposed=np.zeros(model.m, dtype=np.int64),
    )


def _propose(prior, x, j, rng):
    b = prior.b
    xp = x.copy()
    xp[j * b : (j + 1) * b] = conditional_block_sample(prior, x, j, rng)
    return xp


def _decide(log_r, rng) -> bool:
    u = rng.random()
    return bool(np.log(u) < log_r)


def _order(m, rng, random_scan):
    return rng.permutation(m) if random_scan else range(m)


def mwg_sweep(chain, model, prior, obs, store, rng, scheme=None, random_scan=False) -> ChainState:
    """One systematic sweep of the vanilla sampler (full solves)."""
    scheme = chain.cache.scheme if scheme is None else scheme
    h, T = chain.cache.h, chain.cache.T
    if chain.log_lik is None:
        chain.refresh_log_lik(obs)
    for j in _order(model.m, rng, random_scan):
        xp = _propose(prior, chain.x, j, rng)
        cache_p = solve_full(model, xp, store, h, T, scheme)
        ll_p = pm_loglik(obs, cache_p.terminal())
        chain.proposed[j] += 1
        if _decide(ll_p - chain.log_lik, rng):
            chain.accepted[j] += 1
            chain.x, chain.cache, chain.log_lik = xp, cache_p, ll_p
    return chain


def _local_step(chain, model, prior, obs, store, rng, j, L, acceptance, obs_window):
    """Propose block ``j`` and return ``(xp, patch, log_ratio, ll_p)`` without committing."""
    xp = _propose(prior, chain.x, j, rng)
    patch = solve_local(model, xp, chain.cache, store, j, L)
    if acceptance == "full":
        ll_p = pm_loglik(obs, assemble_terminal(chain.cache, patch))
        return xp, patch, ll_p - chain.log_lik, ll_p
    return xp, patch, local_pm_log_ratio(obs, chain.cache, patch, obs_window), None


def _commit(chain, j, xp, patch, ll_p):
    b = chain.cache.b
    chain.x[j * b : (j + 1) * b] = xp[j * b : (j + 1) * b]
    commit_patch(chain.cache, patch)
    chain.log_lik = ll_p


def amwg_sweep(
    chain,
    model,
    prior,
    obs,
    store,
    rng,
    L,
    acceptance="full",
    obs_window=DEFAULT_OBS_WINDOW,
    random_scan=False,
) -> ChainState:
    """One sweep of the accelerated sampler: local re-solves, cache patched on accept."""
    if acceptance == "full" and chain.log_lik is None:
        chain.refresh_log_lik(obs)
    for j in _order(model.m, rng, random_scan):
        xp, patch, log_r, ll_p = _local_step(chain, model, prior, obs, store, rng, j, L, acceptance, obs_window)
        chain.proposed[j] += 1
        if _decide(log_r, rng):
            chain.accepted[j] += 1
            _commit(chain, j, xp, patch, ll_p)
    return chain


def parallel_block_schedule(m: int, L: int) -> List[List[int]]:
    """Partition blocks into groups whose members are ``2L + 2`` or more apart.

    The torus is cut into ``q = m // (2L + 2)`` arcs of near-equal length and
    group ``r`` takes the ``r``-th block of every arc.  Consecutive members are
    one arc length apart, so the separation holds.  A group can hold at most
    ``q`` blocks, so the ``ceil(m / q)`` groups produced are the fewest
    possible.
    """
    D = 2 * L + 2
    if L < 0 or m < D:
        raise ValueError(f"no two blocks of a {m}-block torus are {D} apart or more (need 2L+2 <= m)")
    q = m // D
    lens = [m // q + (1 if a < m % q else 0) for a in range(q)]
    starts = np.concatenate([[0], np.cumsum(lens)[:-1]])
    return [[int(s + r) for s, n_a in zip(starts, lens) if r < n_a] for r in range(max(lens))]


def block_streams(seed: int, m: int) -> List[np.random.Generator]:
    """Independent per-block generators used by the parallel sweep."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(m)]


def amwg_parallel_sweep(
    chain,
    model,
    prior,
    obs,
    store,
    streams,
    L,
    groups,
    obs_window=DEFAULT_OBS_WINDOW,
    pool: Optional[ThreadPoolExecutor] = None,
) -> ChainState:
    """Accelerated sweep that proposes every block of a group at once.

    Members of a group have disjoint local domains and boundary rings, so
    their patches are computed from the same cache and committed together
    before the next group.  Block ``j`` always draws from ``streams[j]``,
    which keeps the chain reproducible whatever the thread count.
    This assumes the prior conditional of a block does not read blocks
    ``2L + 2`` or more away, which holds for a banded prior precision.
    """

    def step(j):
        out = _local_step(chain, model, prior, obs, store, streams[j], j, L, "local", obs_window)
        return out + (streams[j].random(),)

    for group in groups:
        results = list(pool.map(step, group)) if pool is not None else [step(j) for j in group]
        for j, (xp, patch, log_r, _, u) in zip(group, results):
            chain.proposed[j] += 1
            if np.log(u) < log_r:
                chain.accepted[j] += 1
                _commit(chain, j, xp, patch, None)
    return chain


@dataclass
class ChainResult:
    samples: np.ndarray
    accepted: np.ndarray
    proposed: np.ndarray
    seconds: float
    config: SamplerConfig
    chain: ChainState = field(repr=False)

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.sum() / max(self.proposed.sum(), 1))

    def metrics(self) -> dict:
        from .diagnostics import acceptance_rate, msv

        per_block, overall = acceptance_rate(self.accepted, self.proposed)
        return {
            "AR": overall,
            "AR_per_block": per_block.tolist(),
            "CT": self.seconds,
            "MSV": msv(self.samples, self.config.k0),
            "config": asdict(self.config),
            "seed": self.config.seed,
        }


def run_chain(
    config: SamplerConfig,
    model: ModelSpec,
    prior: GaussianPrior,
    obs: ObservationModel,
    store: Optional[BrownianStore] = None,
    x0=None,
    rng: Optional[np.random.Generator] = None,
) -> ChainResult:
    """Run ``K`` sweeps and return every post-sweep state.

    ``x0`` defaults to a prior draw.  ``store`` defaults to ``S`` fresh
    Brownian realizations (or none for an ODE).  The returned ``seconds``
    cover the sweep loop only.
    """
    from .brownian import sample_store

    config.validate_for(model)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    steps = time_steps(config.h, config.T)
    if store is None and not model.is_ode:
        store = sample_store(rng, config.S, model.m, model.b, steps)
    if x0 is None:
        x0 = sample_prior(prior, rng)
    chain = init_chain(model, x0, obs, store, config.h, config.T, config.scheme)
    samples = np.empty((config.K, model.n))

    groups = streams = pool = None
    if config.parallel:
        groups = parallel_block_schedule(model.m, config.L)
        streams = block_streams(config.seed, model.m)
        if config.threads > 1:
            pool = ThreadPoolExecutor(config.threads)

    t0 = time.perf_counter()
    try:
        for k in range(config.K):
            if config.refresh_noise and store is not None and k > 0:
                store = sample_store(rng, config.S, model.m, model.b, steps)
                _resync(chain, model, obs, store, config)
            elif config.resync_every and k > 0 and k % config.resync_every == 0:
                _resync(chain, model, obs, store, config)
            if config.L is None:
                mwg_sweep(chain, model, prior, obs, store, rng, config.scheme, config.random_scan)
            elif config.parallel:
                amwg_parallel_sweep(chain, model, prior, obs, store, streams, config.L, groups, config.obs_window, pool)
            else:
                amwg_sweep(
                    chain, model, prior, obs, store, rng, config.L, config.acceptance, config.obs_window, config.random_scan
                )
            samples[k] = chain.x
    finally:
        if pool is not None:
            pool.shutdown()
    seconds = time.perf_counter() - t0
    log.info("%s: %d sweeps in %.2fs, AR %.4f", config.sampler, config.K, seconds,
             chain.accepted.sum() / max(chain.proposed.sum(), 1))
    return ChainResult(samples, chain.accepted.copy(), chain.proposed.copy(), seconds, config, chain)


def _resync(chain, model, obs, store, config):
    chain.cache = solve_full(model, chain.x, store, config.h, config.T, config.scheme)
    chain.refresh_log_lik(obs)
