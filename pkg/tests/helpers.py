"""Simulation oracles shared by the unit tests and the acceptance suite."""

import numpy as np
from scipy import stats

from amwg.integrate import em_full, em_local
from amwg.model import torus_distances
from amwg.theory import em_local_error_bound


def surrogate_values(base, patch):
    """Full ``(S, steps+1, m, b)`` surrogate trajectory: base outside the domain."""
    out = base.values.copy()
    out[:, :, patch.active_blocks] = patch.values[:, :, patch.active]
    return out


def local_error_vs_bound(model, store, rng, L, C_ds, perturbations, h, T):
    """Worst ratio of empirical local error to the discrete-time bound.

    For every perturbation, block and grid time the mean squared gap between
    the surrogate and the full re-solve (averaged over realizations) is
    compared with the bound.  Returns ``max(error / bound)`` per ``C_d``.
    """
    C_f, C_s = model.lipschitz
    steps = store.steps
    worst = np.zeros(len(C_ds))
    for _ in range(perturbations):
        xo = rng.standard_normal(model.n)
        i_star = int(rng.integers(model.m))
        xp = xo.copy()
        delta = rng.standard_normal(model.b)
        xp[i_star * model.b : (i_star + 1) * model.b] += delta
        base = em_full(model, xo, store, h, T)
        full = em_full(model, xp, store, h, T)
        patch = em_local(model, xp, base, store, i_star, L)
        err = np.sum((surrogate_values(base, patch) - full.values) ** 2, axis=3).mean(axis=0)
        for a, C_d in enumerate(C_ds):
            bound = np.array([em_local_error_bound(delta @ delta, C_f, C_s, C_d, L, i, h) for i in range(steps + 1)])
            worst[a] = max(worst[a], float(np.max(err / bound[:, None])))
    return worst


def perturbation_decay(model, store, rng, perturbations, h, T):
    """Regression of log mean squared block gap on distance to the perturbed block.

    Returns ``(distances, log_msd, linregress result)``.
    """
    m, b = model.m, model.b
    dmax = m // 2
    acc = np.zeros(dmax + 1)
    cnt = np.zeros(dmax + 1)
    for _ in range(perturbations):
        xo = rng.standard_normal(model.n)
        i_star = int(rng.integers(m))
        xp = xo.copy()
        xp[i_star * b : (i_star + 1) * b] += rng.standard_normal(b)
        gap = em_full(model, xo, store, h, T).values[:, -1] - em_full(model, xp, store, h, T).values[:, -1]
        sq = np.sum(gap**2, axis=2).mean(axis=0)
        d = torus_distances(i_star, m)
        np.add.at(acc, d, sq)
        np.add.at(cnt, d, 1)
    dist = np.arange(dmax + 1)
    log_msd = np.log(acc / cnt)
    return dist, log_msd, stats.linregress(dist, log_msd)


CRITERIA = []


def record(number, name, ok, detail):
    """Log one acceptance line for the terminal summary and return ``ok``."""
    CRITERIA.append(f"criterion {number} {'PASS' if ok else 'FAIL'}: {name}: {detail}")
    return ok
