"""Block-structured, locally interacting SDE models on a periodic lattice.

A model partitions the state ``x`` of dimension ``n = m * b`` into ``m``
blocks of ``b`` components.  The drift of block ``j`` only reads blocks
``j - 1``, ``j`` and ``j + 1`` (periodic), and the diffusion of block ``j``
only reads block ``j``.

Drift and diffusion are numba-compiled functions so the integrators can call
them from inside compiled loops.  Their signatures are::

    drift(t, row, kl, k, kr, j, params, out)   # out: (b,)
    diffusion(t, row, k, j, params, out)       # out: (b, b)

``row`` is a ``(K, b)`` array of block values; ``row[k]`` is the block being
evaluated (block ``j`` of the lattice) and ``row[kl]``/``row[kr]`` its left
and right neighbours.  ``params`` is a float64 array of model constants.
Passing slot indices instead of sliced blocks keeps the compiled loops free
of per-call array views.

Block indices are 0-based throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from numba import njit


def block_distance(j1: int, j2: int, m: int) -> int:
    """Torus distance between block indices ``j1`` and ``j2`` (0-based)."""
    if m < 1:
        raise ValueError(f"block count must be positive, got {m}")
    for j in (j1, j2):
        if not 0 <= j < m:
            raise ValueError(f"block index {j} outside [0, {m})")
    d = abs(j1 - j2)
    return min(d, m - d)


def torus_distances(center: int, m: int) -> np.ndarray:
    """Distances of every block ``0..m-1`` to ``center``."""
    d = np.abs(np.arange(m) - center)
    return np.minimum(d, m - d)


@njit(inline="always")
def component(row, kl, k, kr, q):
    """Component ``q`` relative to the start of block ``row[k]``.

    Valid for ``-b <= q < 2b``: negative offsets read the left neighbour,
    offsets past the block read the right one.
    """
    b = row.shape[1]
    if q < 0:
        return row[kl, b + q]
    if q >= b:
        return row[kr, q - b]
    return row[k, q]


@njit(cache=True)
def zero_diffusion(t, row, k, j, params, out):
    out[:, :] = 0.0


@njit(cache=True)
def _lorenz96_drift(t, row, kl, k, kr, j, params, out):
    forcing = params[0]
    for p in range(row.shape[1]):
        xm2 = component(row, kl, k, kr, p - 2)
        xm1 = component(row, kl, k, kr, p - 1)
        xp1 = component(row, kl, k, kr, p + 1)
        out[p] = -xm2 * xm1 + xm1 * xp1 - row[k, p] + forcing


@njit(cache=True)
def _linear_flow_drift(t, row, kl, k, kr, j, params, out):
    a = params[0]
    bb = params[1]
    c = params[2]
    for p in range(row.shape[1]):
        xm1 = component(row, kl, k, kr, p - 1)
        xp1 = component(row, kl, k, kr, p + 1)
        out[p] = a * xm1 + bb * row[k, p] + c * xp1


@njit(cache=True)
def _linear_flow_diffusion(t, row, k, j, params, out):
    sigma = params[3]
    out[:, :] = 0.0
    for p in range(row.shape[1]):
        out[p, p] = sigma


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Drift/diffusion pair on ``m`` periodic blocks of size ``b``.

    ``lipschitz`` holds ``(C_f, C_sigma)`` when the model satisfies the
    global Lipschitz bounds used by :mod:`amwg.theory`; it is ``None`` when no
    constants are known.
    """

    m: int
    b: int
    drift: Callable
    diffusion: Callable = zero_diffusion
    params: np.ndarray = field(default_factory=lambda: np.zeros(1))
    is_ode: bool = False
    lipschitz: Optional[Tuple[float, float]] = None
    name: str = "custom"

    def __post_init__(self):
        if self.m < 1 or self.b < 1:
            raise ValueError(f"block count and size must be positive, got m={self.m}, b={self.b}")
        object.__setattr__(self, "params", np.ascontiguousarray(self.params, dtype=np.float64))

    @property
    def n(self) -> int:
        return self.m * self.b

    def blocks(self, x: np.ndarray) -> np.ndarray:
        """View of a flat state as an ``(m, b)`` array."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n:
            raise ValueError(f"state has {x.shape[-1]} components, model expects {self.n}")
        return x.reshape(x.shape[:-1] + (self.m, self.b))

    def check_state(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"state must have shape ({self.n},), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("state contains non-finite entries")
        return x

    def drift_block(self, t, left, center, right, j) -> np.ndarray:
        row = np.ascontiguousarray(np.stack([left, center, right]), dtype=np.float64)
        if row.shape != (3, self.b):
            raise ValueError(f"blocks must have length {self.b}")
        out = np.empty(self.b)
        self.drift(float(t), row, 0, 1, 2, int(j), self.params, out)
        return out

    def diffusion_block(self, t, center, j) -> np.ndarray:
        row = np.ascontiguousarray(np.reshape(center, (1, self.b)), dtype=np.float64)
        out = np.empty((self.b, self.b))
        self.diffusion(float(t), row, 0, int(j), self.params, out)
        return out

    def drift_full(self, t, x) -> np.ndarray:
        """Drift of the whole flat state, with periodic neighbours."""
        xb = self.blocks(self.check_state(x))
        out = np.empty((self.m, self.b))
        for j in range(self.m):
            out[j] = self.drift_block(t, xb[j - 1], xb[j], xb[(j + 1) % self.m], j)
        return out.ravel()


def lorenz96(n: int, b: int = 2, forcing: float = 8.0) -> ModelSpec:
    """Lorenz 96 ODE with ``n`` components grouped in blocks of size ``b``.

    Component ``p`` evolves as ``-x[p-2] x[p-1] + x[p-1] x[p+1] - x[p] + F``.
    The ``x[p-2]`` term reaches two components back, so blocks must hold at
    least two components for the drift to stay nearest-neighbour in blocks.
    No Lipschitz constants are attached since the drift is quadratic.
    """
    if n < 4 or n % 2:
        raise ValueError(f"Lorenz 96 needs an even n >= 4, got {n}")
    if b < 2:
        raise ValueError(f"Lorenz 96 needs block size b >= 2, got {b}")
    if n % b:
        raise ValueError(f"n={n} is not divisible by b={b}")
    return ModelSpec(
        m=n // b,
        b=b,
        drift=_lorenz96_drift,
        diffusion=zero_diffusion,
        params=np.array([forcing]),
        is_ode=True,
        lipschitz=None,
        name="lorenz96",
    )


def linear_flow_coefficients(l, mu, nu, w):
    """Centered-difference stencil ``(a, b, c)`` of the advection-diffusion flow."""
    if l <= 0:
        raise ValueError(f"grid size l must be positive, got {l}")
    a = mu / l**2 - w / (2 * l)
    bb = -2 * mu / l**2 - nu
    c = mu / l**2 + w / (2 * l)
    return a, bb, c


def linear_flow(
    n: int,
    b: int = 1,
    l: float = 0.2,
    mu: float = 0.1,
    nu: float = 0.1,
    w: float = 2.0,
    sigma_x: float = 0.1,
) -> ModelSpec:
    """Discretized stochastically forced advection-diffusion equation.

    ``dx_p = (a x[p-1] + b x[p] + c x[p+1]) dt + sigma_x dW_p`` on a periodic
    grid of ``n`` points.  The defaults are the strong-advection, weak-damping
    regime ``l=0.2, mu=0.1, nu=0.1, w=2, sigma_x=0.1``.
    """
    if n < 1 or b < 1 or n % b:
        raise ValueError(f"n={n} must be a positive multiple of b={b}")
    a, bb, c = linear_flow_coefficients(l, mu, nu, w)
    return ModelSpec(
        m=n // b,
        b=b,
        drift=_linear_flow_drift,
        diffusion=_linear_flow_diffusion,
        params=np.array([a, bb, c, sigma_x]),
        is_ode=sigma_x == 0.0,
        lipschitz=(linear_flow_lipschitz(a, bb, c, b), 0.0),
        name="linear_flow",
    )


def linear_flow_lipschitz(a, bb, c, b) -> float:
    """Drift Lipschitz constant ``C_f`` for the tridiagonal stencil.

    Returns ``3 max(a^2, b^2, c^2)`` unless the exact squared norm of the
    block map ``(left, center, right) -> drift`` is larger (possible for
    same-sign stencils with ``b >= 2``), in which case that norm is used.
    """
    cs = 3.0 * max(a * a, bb * bb, c * c)
    A = np.zeros((b, 3 * b))
    for p in range(b):
        A[p, b + p - 1] = a
        A[p, b + p] = bb
        A[p, b + p + 1] = c
    return max(cs, float(np.linalg.norm(A, 2) ** 2))


def linear_flow_matrix(model: ModelSpec) -> np.ndarray:
    """Circulant tridiagonal generator ``M`` with ``dx = M x dt + sigma dW``."""
    if model.name != "linear_flow":
        raise ValueError(f"expected a linear_flow model, got {model.name!r}")
    a, bb, c = model.params[:3]
    n = model.n
    M = np.zeros((n, n))
    idx = np.arange(n)
    M[idx, idx] = bb
    M[idx, (idx + 1) % n] += c
    M[idx, (idx - 1) % n] += a
    return M
