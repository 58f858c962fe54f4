"""Full and local numerical solves, and the trajectory cache they share.

A full solve advances every block.  A local solve re-integrates only the
blocks within torus distance ``L`` of the perturbed block ``i_star`` and reads
the cached trajectory of the two blocks just outside that domain as boundary
data.  For RK4 the cached stage values of those boundary blocks are read as
well, so the local step is exactly the full step with stages frozen outside
the domain.

Once ``L >= m // 2`` the local domain covers the torus and the local solve
executes the same operations as a full solve, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from .brownian import BrownianStore
from .errors import ContractViolation, DivergenceError, UnsupportedSchemeError
from .model import ModelSpec

_DUMMY_W = np.zeros((1, 1, 1, 1))

SCHEMES = ("em", "rk4")


def time_steps(h: float, T: float) -> int:
    """Number of steps of size ``h`` covering ``[0, T]``; ``T/h`` must be an integer."""
    if h <= 0 or T <= 0:
        raise ValueError(f"h and T must be positive, got h={h}, T={T}")
    steps = int(round(T / h))
    if steps < 1 or abs(steps * h - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T/h = {T / h!r} is not an integer")
    return steps


@dataclass(eq=False)
class TrajectoryCache:
    """Solution values at every grid time, per realization.

    ``values`` has shape ``(S, steps + 1, m, b)``.  ``rk4_stages`` has shape
    ``(S, steps, 4, m, b)`` and holds the increments ``h f(...)`` of each
    stage; it is present only for RK4 solves.  ``realizations`` maps the
    first axis to realization indices of the Brownian store.
    """

    values: np.ndarray
    h: float
    T: float
    realizations: np.ndarray
    rk4_stages: Optional[np.ndarray] = None

    @property
    def S(self) -> int:
        return self.values.shape[0]

    @property
    def steps(self) -> int:
        return self.values.shape[1] - 1

    @property
    def m(self) -> int:
        return self.values.shape[2]

    @property
    def b(self) -> int:
        return self.values.shape[3]

    @property
    def scheme(self) -> str:
        return "rk4" if self.rk4_stages is not None else "em"

    def terminal(self) -> np.ndarray:
        """States at time ``T`` as an ``(S, n)`` array (a view)."""
        return self.values[:, -1].reshape(self.S, -1)

    def initial_condition(self) -> np.ndarray:
        return self.values[0, 0].reshape(-1).copy()

    def copy(self) -> "TrajectoryCache":
        return TrajectoryCache(
            self.values.copy(),
            self.h,
            self.T,
            self.realizations.copy(),
            None if self.rk4_stages is None else self.rk4_stages.copy(),
        )


@dataclass(eq=False)
class LocalPatch:
    """Re-solved trajectories on the local domain of ``center``.

    Slot ``k`` of ``values`` (axis 2) holds block ``blocks[k]``; the slots in
    ``active`` were re-integrated, the others are the boundary copies read
    from the base cache.
    """

    center: int
    radius: int
    blocks: np.ndarray
    active: np.ndarray
    values: np.ndarray
    rk4_stages: Optional[np.ndarray] = None

    @property
    def active_blocks(self) -> np.ndarray:
        return self.blocks[self.active]

    @property
    def covers_torus(self) -> bool:
        return self.active.size == self.values.shape[2] and self.active.size == np.unique(self.blocks).size

    def terminal_active(self) -> np.ndarray:
        """``(S, n_active, b)`` terminal values of the re-solved blocks."""
        return self.values[:, -1, self.active]


def _frozen(*arrays):
    for a in arrays:
        a.setflags(write=False)
    return arrays


@lru_cache(maxsize=1024)
def _full_window(m):
    blocks = np.arange(m)
    return _frozen(blocks, (blocks - 1) % m, (blocks + 1) % m, blocks.copy(), np.empty(0, dtype=np.int64))


@lru_cache(maxsize=65536)
def _window(m, center, L):
    if L >= m // 2:
        return _full_window(m)
    K = 2 * L + 3
    slots = np.arange(K)
    blocks = (center - L - 1 + slots) % m
    left = np.maximum(slots - 1, 0)
    right = np.minimum(slots + 1, K - 1)
    return _frozen(blocks, left, right, slots[1:-1].copy(), np.array([0, K - 1]))


def local_window(m: int, center: int, L: int):
    """Slots ``(blocks, left, right, active, halo)`` for a local solve.

    The window is the domain ``center - L .. center + L`` flanked by one
    boundary slot on each side.  ``L >= m // 2`` gives the full torus and no
    boundary slots.  Returned arrays are read-only and shared.
    """
    if L < 0:
        raise ValueError(f"radius must be nonnegative, got {L}")
    if not 0 <= center < m:
        raise ValueError(f"block index {center} outside [0, {m})")
    if L < m // 2 and 2 * L + 2 > m:
        raise ValueError(f"radius L={L} does not fit on a torus of {m} blocks (need 2L+2 <= m)")
    return _window(int(m), int(center), int(L))


def _realization_index(store_S, c):
    if c is None:
        return np.arange(store_S)
    reals = np.atleast_1d(np.asarray(c, dtype=np.int64))
    if reals.size == 0 or reals.min() < 0 or reals.max() >= store_S:
        raise ValueError(f"realization indices {c!r} outside [0, {store_S})")
    return reals


def _noise(model, store, steps):
    if store is None or store.is_empty:
        if not model.is_ode:
            raise ValueError("an SDE model needs a non-empty Brownian store")
        return False, _DUMMY_W
    if (store.m, store.b) != (model.m, model.b):
        raise ValueError(f"store blocks ({store.m}, {store.b}) do not match model ({model.m}, {model.b})")
    if store.steps != steps:
        raise ValueError(f"store has {store.steps} steps, the time grid has {steps}")
    return not model.is_ode, store.increments


def _raise_divergence(status, reals, scheme):
    c, i, j = (int(v) for v in status)
    if c >= 0:
        raise DivergenceError(step=i, block=j, realization=int(reals[c]), scheme=scheme)


def em_full(
    model: ModelSpec,
    x0,
    store: Optional[BrownianStore],
    h: float,
    T: float,
    c: Union[None, int, Sequence[int]] = None,
) -> TrajectoryCache:
    """Euler-Maruyama solve of all blocks from ``x0``.

    ``c`` selects realizations of ``store`` (default: all of them).  For an
    ODE model ``store`` may be ``None`` or empty, giving one deterministic
    trajectory.
    """
    x0 = model.check_state(x0)
    steps = time_steps(h, T)
    noisy, W = _noise(model, store, steps)
    S_store = store.S if store is not None else 1
    reals = _realization_index(S_store, c)
    x = np.empty((reals.size, steps + 1, model.m, model.b))
    x[:, 0] = model.blocks(x0)
    blocks, left, right, active, _ = _full_window(model.m)
    kernel = _kernels.em_kernel(model.drift, model.diffusion)
    status = kernel(model.params, noisy, x, W, reals, blocks, left, right, active, float(h))
    _raise_divergence(status, reals, "Euler-Maruyama")
    return TrajectoryCache(x, float(h), float(T), reals)


def _check_proposal(model, x_p, base, i_star):
    x_p = model.check_state(x_p)
    diff = (model.blocks(x_p) != base.values[0, 0]).any(axis=1)
    diff[i_star] = False
    if diff.any():
        raise ContractViolation(
            f"proposal differs from the cached initial condition outside block {i_star} "
            f"(blocks {np.flatnonzero(diff).tolist()})"
        )
    return x_p


def _check_base(model, base):
    if (base.m, base.b) != (model.m, model.b):
        raise ContractViolation(f"cache blocks ({base.m}, {base.b}) do not match model ({model.m}, {model.b})")


def em_local(
    model: ModelSpec,
    x_p,
    base: TrajectoryCache,
    store: Optional[BrownianStore],
    i_star: int,
    L: int,
) -> LocalPatch:
    """Euler-Maruyama solve of the local surrogate around block ``i_star``.

    Uses the same increments as ``base`` for every realization it holds.
    """
    _check_base(model, base)
    x_p = _check_proposal(model, x_p, base, i_star)
    noisy, W = _noise(model, store, base.steps)
    blocks, left, right, active, halo = local_window(model.m, i_star, L)
    x = np.empty((base.S, base.steps + 1, blocks.size, model.b))
    for k in halo:
        x[:, :, k] = base.values[:, :, blocks[k]]
    x[:, 0, active] = model.blocks(x_p)[blocks[active]]
    kernel = _kernels.em_kernel(model.drift, model.diffusion)
    status = kernel(model.params, noisy, x, W, base.realizations, blocks, left, right, active, base.h)
    _raise_divergence(status, base.realizations, "Euler-Maruyama")
    return LocalPatch(int(i_star), int(L), blocks, active, x)


def rk4_full(model: ModelSpec, x0, h: float, T: float) -> TrajectoryCache:
    """Classic RK4 solve of an ODE model, keeping every stage."""
    if not model.is_ode:
        raise UnsupportedSchemeError("RK4 is only available for models without stochastic forcing")
    x0 = model.check_state(x0)
    steps = time_steps(h, T)
    x = np.empty((1, steps + 1, model.m, model.b))
    x[:, 0] = model.blocks(x0)
    stages = np.empty((1, steps, 4, model.m, model.b))
    blocks, left, right, active, _ = _full_window(model.m)
    reals = np.zeros(1, dtype=np.int64)
    status = _kernels.rk4_kernel(model.drift)(model.params, x, stages, blocks, left, right, active, float(h))
    _raise_divergence(status, reals, "RK4")
    return TrajectoryCache(x, float(h), float(T), reals, stages)


def rk4_local(model: ModelSpec, x_p, base: TrajectoryCache, i_star: int, L: int) -> LocalPatch:
    """RK4 solve of the local surrogate, with boundary states and stages from ``base``."""
    if not model.is_ode:
        raise UnsupportedSchemeError("RK4 is only available for models without stochastic forcing")
    if base.rk4_stages is None:
        raise ContractViolation("base cache carries no RK4 stages")
    _check_base(model, base)
    x_p = _check_proposal(model, x_p, base, i_star)
    blocks, left, right, active, halo = local_window(model.m, i_star, L)
    K = blocks.size
    x = np.empty((base.S, base.steps + 1, K, model.b))
    stages = np.empty((base.S, base.steps, 4, K, model.b))
    for k in halo:
        x[:, :, k] = base.values[:, :, blocks[k]]
        stages[:, :, :, k] = base.rk4_stages[:, :, :, blocks[k]]
    x[:, 0, active] = model.blocks(x_p)[blocks[active]]
    status = _kernels.rk4_kernel(model.drift)(model.params, x, stages, blocks, left, right, active, base.h)
    _raise_divergence(status, base.realizations, "RK4")
    return LocalPatch(int(i_star), int(L), blocks, active, x, stages)


def commit_patch(base: TrajectoryCache, patch: LocalPatch) -> TrajectoryCache:
    """Overwrite the re-solved blocks of ``base`` with the patch, in place."""
    if patch.values.shape[0] != base.S or patch.values.shape[1] != base.steps + 1 or patch.values.shape[3] != base.b:
        raise ContractViolation(
            f"patch shape {patch.values.shape} does not fit cache shape {base.values.shape}"
        )
    if (patch.rk4_stages is None) != (base.rk4_stages is None):
        raise ContractViolation("patch and cache were produced by different schemes")
    if patch.blocks.max() >= base.m:
        raise ContractViolation("patch blocks outside the cache")
    dest = patch.active_blocks
    base.values[:, :, dest] = patch.values[:, :, patch.active]
    if base.rk4_stages is not None:
        base.rk4_stages[:, :, :, dest] = patch.rk4_stages[:, :, :, patch.active]
    return base


def solve_full(model, x0, store, h, T, scheme="em") -> TrajectoryCache:
    if scheme == "rk4":
        return rk4_full(model, x0, h, T)
    if scheme == "em":
        return em_full(model, x0, store, h, T)
    raise UnsupportedSchemeError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def solve_local(model, x_p, base, store, i_star, L) -> LocalPatch:
    if base.scheme == "rk4":
        return rk4_local(model, x_p, base, i_star, L)
    return em_local(model, x_p, base, store, i_star, L)


def assemble_terminal(base: TrajectoryCache, patch: LocalPatch) -> np.ndarray:
    """``(S, n)`` terminal states of the surrogate: base everywhere, patch on its domain."""
    out = base.values[:, -1].copy()
    out[:, patch.active_blocks] = patch.terminal_active()
    return out.reshape(base.S, -1)
