"""Gaussian priors with precomputed block conditionals.

The Gibbs proposal for block ``j`` is the prior conditional of ``x_j`` given
every other block.  Its covariance and the linear map giving its mean are
fixed by the prior, so they are factored once at construction and each
proposal only costs a small matrix-vector product over the nonzero
coefficients.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy import linalg

from .integrate import rk4_full, time_steps
from .model import ModelSpec

_MAGIC = b"AMWGPR01"
_HEADER = struct.Struct("<8s2q")


@dataclass(eq=False)
class BlockConditional:
    """``x_j | x_rest ~ N(mean_j + coef @ (x[support] - mean[support]), chol chol^T)``."""

    index: np.ndarray
    support: np.ndarray
    coef: np.ndarray
    chol: np.ndarray

    @property
    def covariance(self) -> np.ndarray:
        return self.chol @ self.chol.T


def _block_conditionals(precision, b) -> List[BlockConditional]:
    n = precision.shape[0]
    out = []
    for j in range(n // b):
        idx = np.arange(j * b, (j + 1) * b)
        Qjj = precision[np.ix_(idx, idx)]
        cov = linalg.inv(Qjj)
        cov = (cov + cov.T) / 2
        coef = -cov @ precision[idx]
        coef[:, idx] = 0.0
        support = np.flatnonzero(np.any(coef != 0.0, axis=0))
        out.append(
            BlockConditional(
                index=idx,
                support=support,
                coef=np.ascontiguousarray(coef[:, support]),
                chol=linalg.cholesky(cov, lower=True),
            )
        )
    return out


@dataclass(eq=False)
class GaussianPrior:
    """``N(mean, covariance)`` on ``n = m * b`` components."""

    mean: np.ndarray
    covariance: np.ndarray
    b: int
    precision: Optional[np.ndarray] = None
    chol: np.ndarray = field(init=False, repr=False)
    conditionals: List[BlockConditional] = field(init=False, repr=False)

    def __post_init__(self):
        self.mean = np.array(self.mean, dtype=np.float64)
        self.covariance = np.array(self.covariance, dtype=np.float64)
        n = self.mean.size
        if self.covariance.shape != (n, n):
            raise ValueError(f"covariance shape {self.covariance.shape} does not match mean of length {n}")
        if self.b < 1 or n % self.b:
            raise ValueError(f"n={n} is not a positive multiple of b={self.b}")
        if not np.allclose(self.covariance, self.covariance.T, rtol=0, atol=1e-12 * np.abs(self.covariance).max()):
            raise ValueError("covariance is not symmetric")
        self.covariance = (self.covariance + self.covariance.T) / 2
        try:
            self.chol = linalg.cholesky(self.covariance, lower=True)
        except linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive definite") from exc
        if self.precision is None:
            self.precision = linalg.cho_solve((self.chol, True), np.eye(n))
            self.precision = (self.precision + self.precision.T) / 2
        self.conditionals = _block_conditionals(self.precision, self.b)

    @classmethod
    def from_precision(cls, mean, precision, b) -> "GaussianPrior":
        """Build from a precision matrix; its zero pattern carries into the conditionals."""
        precision = np.array(precision, dtype=np.float64)
        try:
            lp = linalg.cholesky(precision, lower=True)
        except linalg.LinAlgError as exc:
            raise ValueError("precision is not positive definite") from exc
        cov = linalg.cho_solve((lp, True), np.eye(precision.shape[0]))
        return cls(mean, (cov + cov.T) / 2, b, precision=precision)

    @classmethod
    def standard(cls, n, b) -> "GaussianPrior":
        return cls.from_precision(np.zeros(n), np.eye(n), b)

    @property
    def n(self) -> int:
        return self.mean.size

    @property
    def m(self) -> int:
        return self.n // self.b

    def conditional(self, x, j):
        """Mean and covariance of block ``j`` given the rest of ``x``."""
        bc = self.conditionals[j]
        mean = self.mean[bc.index] + bc.coef @ (x[bc.support] - self.mean[bc.support])
        return mean, bc.covariance

    def logpdf(self, x) -> float:
        z = linalg.solve_triangular(self.chol, np.asarray(x) - self.mean, lower=True)
        logdet = 2 * np.log(np.diag(self.chol)).sum()
        return float(-0.5 * (z @ z) - 0.5 * logdet - 0.5 * self.n * np.log(2 * np.pi))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, self.n, self.b))
            fh.write(self.mean.astype("<f8").tobytes())
            fh.write(self.covariance.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "GaussianPrior":
        raw = Path(path).read_bytes()
        magic, n, b = _HEADER.unpack_from(raw)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a prior dump")
        data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        if data.size != n + n * n:
            raise ValueError(f"{path}: expected {n + n * n} values, found {data.size}")
        return cls(data[:n].copy(), data[n:].reshape(n, n).copy(), b)


def sample_prior(prior: GaussianPrior, rng: np.random.Generator) -> np.ndarray:
    return prior.mean + prior.chol @ rng.standard_normal(prior.n)


def conditional_block_sample(prior: GaussianPrior, x, j: int, rng: np.random.Generator) -> np.ndarray:
    """Draw block ``j`` from the prior conditional given the other blocks of ``x``."""
    if not 0 <= j < prior.m:
        raise ValueError(f"block index {j} outside [0, {prior.m})")
    bc = prior.conditionals[j]
    mean = prior.mean[bc.index] + bc.coef @ (x[bc.support] - prior.mean[bc.support])
    return mean + bc.chol @ rng.standard_normal(prior.b)


def component_distances(n: int) -> np.ndarray:
    idx = np.arange(n)
    d = np.abs(idx[:, None] - idx[None, :])
    return np.minimum(d, n - d)


def taper(covariance, radius) -> np.ndarray:
    """Zero every entry whose components are more than ``radius`` apart on the torus."""
    cov = np.array(covariance, dtype=np.float64)
    cov[component_distances(cov.shape[0]) > radius] = 0.0
    return cov


def make_spd(cov, jitter=1e-8, max_tries=20):
    """Add escalating diagonal jitter until Cholesky succeeds.

    Returns the repaired matrix and the jitter added (0.0 if none was needed).
    """
    scale = float(np.mean(np.diag(cov)))
    eye = np.eye(cov.shape[0])
    added = 0.0
    for _ in range(max_tries):
        try:
            linalg.cholesky(cov + added * eye, lower=True)
            return cov + added * eye, added
        except linalg.LinAlgError:
            added = jitter * scale if added == 0.0 else added * 10
    raise ValueError(f"matrix still not positive definite after adding {added:g} to the diagonal")


def lorenz96_trajectory(model: ModelSpec, x0, length, h=0.01, every=0.1) -> np.ndarray:
    """Snapshots every ``every`` time units of an RK4 run of length ``length``."""
    chunk = time_steps(h, every)
    n_snap = int(round(length / every))
    x = np.asarray(x0, dtype=np.float64)
    out = np.empty((n_snap, model.n))
    for s in range(n_snap):
        x = rk4_full(model, x, h, chunk * h).terminal()[0].copy()
        out[s] = x
    return out


def lorenz96_equilibrium_prior(
    model: ModelSpec,
    sim_length: float = 1000.0,
    burn: float = 10.0,
    taper_radius: int = 2,
    h: float = 0.01,
    rng: Optional[np.random.Generator] = None,
    every: float = 0.1,
    jitter: float = 1e-8,
) -> GaussianPrior:
    """Gaussian approximation of the Lorenz 96 climatology.

    Runs the model from a perturbed rest state, discards ``burn`` time units,
    then takes the empirical mean and covariance of snapshots taken every
    ``every`` time units.  The covariance is cut off beyond ``taper_radius``
    components and made positive definite with diagonal jitter if needed.
    """
    if model.name != "lorenz96":
        raise ValueError(f"expected a lorenz96 model, got {model.name!r}")
    rng = np.random.default_rng() if rng is None else rng
    forcing = model.params[0]
    x0 = forcing + rng.standard_normal(model.n)
    if burn > 0:
        x0 = lorenz96_trajectory(model, x0, burn, h, burn)[-1]
    snaps = lorenz96_trajectory(model, x0, sim_length, h, every)
    mean = snaps.mean(axis=0)
    cov = np.cov(snaps, rowvar=False)
    cov, _ = make_spd(taper(cov, taper_radius), jitter=jitter)
    return GaussianPrior(mean, cov, model.b)
