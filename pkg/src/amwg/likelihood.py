"""Gaussian observation model and (pseudo-marginal) log-likelihoods.

Data are ``y = H x(T) + xi`` with ``xi ~ N(0, R)``.  Everything is stored
whitened by the Cholesky factor of ``R``, so a quadratic form is a plain sum
of squares.  Log-likelihoods drop the Gaussian normalizing constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
from scipy import linalg

from .integrate import LocalPatch, TrajectoryCache
from .model import torus_distances

DEFAULT_OBS_WINDOW = 20


@dataclass(frozen=True, eq=False)
class ObsWindow:
    """Whitened observation rows that only read the components ``comps``."""

    comps: np.ndarray
    rows: np.ndarray
    Hw: np.ndarray
    yw: np.ndarray


@dataclass(eq=False)
class ObservationModel:
    H: np.ndarray
    R: np.ndarray
    y: np.ndarray
    _windows: Dict[Tuple[int, int, int], ObsWindow] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.H = np.atleast_2d(np.array(self.H, dtype=np.float64))
        self.R = np.atleast_2d(np.array(self.R, dtype=np.float64))
        self.y = np.array(self.y, dtype=np.float64).reshape(-1)
        k = self.H.shape[0]
        if self.R.shape != (k, k) or self.y.shape != (k,):
            raise ValueError(f"H has {k} rows but R is {self.R.shape} and y has {self.y.size} entries")
        empty = np.flatnonzero(~np.any(self.H != 0, axis=1))
        if empty.size:
            raise ValueError(f"observation rows {empty.tolist()} of H are all zero")
        try:
            self._chol = linalg.cholesky(self.R, lower=True)
        except linalg.LinAlgError as exc:
            raise ValueError("R is not positive definite") from exc
        self.Hw = linalg.solve_triangular(self._chol, self.H, lower=True)
        self.yw = linalg.solve_triangular(self._chol, self.y, lower=True)

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def n_obs(self) -> int:
        return self.H.shape[0]

    def with_data(self, y) -> "ObservationModel":
        return ObservationModel(self.H, self.R, y)

    def simulate(self, xT, rng: np.random.Generator) -> np.ndarray:
        """``H xT`` plus a draw of the observation noise."""
        return self.H @ np.asarray(xT) + self._chol @ rng.standard_normal(self.n_obs)

    def window(self, center: int, b: int, width: int) -> ObsWindow:
        """Rows usable for a localized ratio around block ``center``.

        The window is ``width`` consecutive components (periodic) centred on
        the block; rows of ``H`` reading anything outside it are dropped.
        ``width >= n`` returns the global whitened system unchanged.
        """
        key = (center, b, width)
        win = self._windows.get(key)
        if win is not None:
            return win
        n = self.n
        if width < b:
            raise ValueError(f"observation window of {width} components is smaller than one block ({b})")
        if width >= n:
            win = ObsWindow(np.arange(n), np.arange(self.n_obs), self.Hw, self.yw)
        else:
            comps = (center * b - (width - b) // 2 + np.arange(width)) % n
            inside = np.zeros(n, dtype=bool)
            inside[comps] = True
            reads = self.H != 0
            rows = np.flatnonzero(~np.any(reads & ~inside, axis=1))
            Ls = linalg.cholesky(self.R[np.ix_(rows, rows)], lower=True) if rows.size else np.zeros((0, 0))
            Hw = linalg.solve_triangular(Ls, self.H[np.ix_(rows, comps)], lower=True) if rows.size else np.zeros((0, width))
            yw = linalg.solve_triangular(Ls, self.y[rows], lower=True) if rows.size else np.zeros(0)
            win = ObsWindow(comps, rows, Hw, yw)
        self._windows[key] = win
        return win

    def save(self, directory) -> None:
        """Write ``y.csv``, ``H.csv`` and ``R.csv`` to ``directory``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_vector_csv(d / "y.csv", self.y)
        np.savetxt(d / "H.csv", self.H, delimiter=",", fmt="%.17g")
        np.savetxt(d / "R.csv", self.R, delimiter=",", fmt="%.17g")

    @classmethod
    def load(cls, directory) -> "ObservationModel":
        d = Path(directory)
        y = load_vector_csv(d / "y.csv")
        H = np.loadtxt(d / "H.csv", delimiter=",", ndmin=2)
        R = np.loadtxt(d / "R.csv", delimiter=",", ndmin=2)
        return cls(H, R, y)


def every_other(n: int) -> np.ndarray:
    """``(n/2, n)`` matrix observing components ``0, 2, 4, ...``."""
    if n < 2 or n % 2:
        raise ValueError(f"every-other observation needs an even n, got {n}")
    H = np.zeros((n // 2, n))
    H[np.arange(n // 2), 2 * np.arange(n // 2)] = 1.0
    return H


def observation_matrix(spec, n: int) -> np.ndarray:
    """Resolve ``"every_other"``, ``"identity"`` or a CSV path to a matrix."""
    if spec == "every_other":
        return every_other(n)
    if spec == "identity":
        return np.eye(n)
    H = np.loadtxt(spec, delimiter=",", ndmin=2)
    if H.shape[1] != n:
        raise ValueError(f"{spec}: H has {H.shape[1]} columns, state has {n}")
    return H


def save_vector_csv(path, v) -> None:
    np.savetxt(path, np.asarray(v).reshape(-1, 1), fmt="%.17g")


def load_vector_csv(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=1).reshape(-1)


def _quad_forms(Hw, yw, X) -> np.ndarray:
    r = yw - np.ascontiguousarray(X) @ Hw.T
    return np.einsum("ij,ij->i", r, r)


def ode_loglik(obs: ObservationModel, xT) -> float:
    """``-1/2 |y - H xT|^2_R`` for one terminal state."""
    xT = np.asarray(xT, dtype=np.float64)
    if xT.shape != (obs.n,):
        raise ValueError(f"terminal state must have shape ({obs.n},), got {xT.shape}")
    return float(-0.5 * _quad_forms(obs.Hw, obs.yw, xT[None])[0])


def _log_mean_exp(a) -> float:
    # max-shifted; scipy's logsumexp costs more in dispatch than the sum itself here
    top = a.max()
    if a.size == 1 or not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.mean(np.exp(a - top))))


def pm_loglik(obs: ObservationModel, terminal_states) -> float:
    """Log of the Monte Carlo average of the likelihood over ``S`` terminal states."""
    X = np.atleast_2d(np.asarray(terminal_states, dtype=np.float64))
    if X.shape[0] < 1 or X.shape[1] != obs.n:
        raise ValueError(f"terminal states must have shape (S, {obs.n}), got {X.shape}")
    return _log_mean_exp(-0.5 * _quad_forms(obs.Hw, obs.yw, X))


def _window_states(base: TrajectoryCache, patch: LocalPatch, comps):
    b = base.b
    cb, cp = comps // b, comps % b
    X_old = base.values[:, -1, cb, cp]
    X_new = X_old.copy()
    if patch.covers_torus:
        X_new = patch.values[:, -1, cb, cp]
    else:
        m = base.m
        inside = torus_distances(patch.center, m)[cb] <= patch.radius
        slot = (cb[inside] - patch.center + patch.radius + 1) % m
        X_new[:, inside] = patch.values[:, -1, slot, cp[inside]]
    return X_old, X_new


def local_pm_log_ratio(
    obs: ObservationModel,
    base: TrajectoryCache,
    patch: LocalPatch,
    obs_window: int = DEFAULT_OBS_WINDOW,
) -> float:
    """Localized log acceptance ratio of the surrogate against the cache.

    Only observations that read components inside the window around the
    perturbed block enter; the rest of the likelihood is treated as unchanged.
    """
    if patch.values.shape[0] != base.S:
        raise ValueError(f"patch holds {patch.values.shape[0]} realizations, cache holds {base.S}")
    win = obs.window(patch.center, base.b, obs_window)
    if win.rows.size == 0:
        return 0.0
    X_old, X_new = _window_states(base, patch, win.comps)
    new = _log_mean_exp(-0.5 * _quad_forms(win.Hw, win.yw, X_new))
    old = _log_mean_exp(-0.5 * _quad_forms(win.Hw, win.yw, X_old))
    return new - old
