"""Compiled time-stepping loops shared by full and local solves.

Both loops work on a *window*: ``K`` slots, slot ``k`` holding block
``blocks[k]``.  Only the slots listed in ``active`` are advanced; every other
slot is boundary data that the caller has filled for all times (and, for
RK4, all stages).  ``left[k]``/``right[k]`` are the slot indices of the
neighbours of an active slot.  A full solve is the window of all ``m`` blocks
with periodic neighbours, so full and local solves execute the same floating
point operations block by block.

Both return ``(c, i, j)`` of the first non-finite value written, or
``(-1, -1, -1)``.

The loops are compiled once per model function: the factories close over
the drift/diffusion so each call skips argument typing of the callables.
"""

from functools import lru_cache

import numpy as np
from numba import njit


@lru_cache(maxsize=None)
def em_kernel(drift, diffusion):
    @njit(nogil=True)
    def em_window(params, noisy, x, W, reals, blocks, left, right, active, h):
        return _em_body(drift, diffusion, params, noisy, x, W, reals, blocks, left, right, active, h)

    return em_window


@lru_cache(maxsize=None)
def rk4_kernel(drift):
    @njit(nogil=True)
    def rk4_window(params, x, stages, blocks, left, right, active, h):
        return _rk4_body(drift, params, x, stages, blocks, left, right, active, h)

    return rk4_window


@njit(inline="always")
def _em_body(drift, diffusion, params, noisy, x, W, reals, blocks, left, right, active, h):
    S, n_t, K, b = x.shape
    sqrt_h = np.sqrt(h)
    f = np.empty(b)
    g = np.empty((b, b))
    for c in range(S):
        rc = reals[c]
        for i in range(n_t - 1):
            t = i * h
            row = x[c, i]
            nxt = x[c, i + 1]
            for a in range(active.shape[0]):
                k = active[a]
                j = blocks[k]
                drift(t, row, left[k], k, right[k], j, params, f)
                if noisy:
                    diffusion(t, row, k, j, params, g)
                for p in range(b):
                    v = row[k, p]
                    if noisy:
                        s = 0.0
                        for q in range(b):
                            s += g[p, q] * W[rc, i, j, q]
                        v = v + s * sqrt_h
                    v = v + f[p] * h
                    nxt[k, p] = v
                    if not np.isfinite(v):
                        return c, i + 1, j
    return -1, -1, -1


@njit(inline="always")
def _rk4_body(drift, params, x, stages, blocks, left, right, active, h):
    S, n_t, K, b = x.shape
    f = np.empty(b)
    arg = np.empty((K, b))
    for c in range(S):
        for i in range(n_t - 1):
            t = i * h
            row = x[c, i]
            ks = stages[c, i]
            for s in range(4):
                if s == 0:
                    src = row
                    ts = t
                else:
                    # stage argument on every slot, boundary slots included
                    for k in range(K):
                        for p in range(b):
                            if s < 3:
                                arg[k, p] = row[k, p] + ks[s - 1, k, p] / 2
                            else:
                                arg[k, p] = row[k, p] + ks[s - 1, k, p]
                    src = arg
                    ts = t + h / 2 if s < 3 else t + h
                for a in range(active.shape[0]):
                    k = active[a]
                    drift(ts, src, left[k], k, right[k], blocks[k], params, f)
                    for p in range(b):
                        ks[s, k, p] = h * f[p]
            nxt = x[c, i + 1]
            for a in range(active.shape[0]):
                k = active[a]
                for p in range(b):
                    v = row[k, p] + (ks[0, k, p] + 2 * ks[1, k, p] + 2 * ks[2, k, p] + ks[3, k, p]) / 6
                    nxt[k, p] = v
                    if not np.isfinite(v):
                        return c, i + 1, blocks[k]
    return -1, -1, -1
