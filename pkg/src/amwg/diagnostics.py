"""Chain metrics and the closed-form posterior of the linear flow model."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from .errors import AccuracyError, UnsupportedSchemeError
from .likelihood import ObservationModel
from .model import ModelSpec, linear_flow_matrix
from .prior import GaussianPrior


def _check_burn_in(samples, k0):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ValueError(f"samples must be a (K, n) array, got shape {samples.shape}")
    if not 0 <= k0 < samples.shape[0]:
        raise ValueError(f"burn-in k0={k0} must lie in [0, K={samples.shape[0]})")
    return samples[k0:]


def mse(samples, truth, k0: int) -> float:
    """Squared distance of the post-burn-in sample mean to ``truth``, per component."""
    kept = _check_burn_in(samples, k0)
    return float(np.mean((kept.mean(axis=0) - np.asarray(truth)) ** 2))


def msv(samples, k0: int) -> float:
    """Mean over components of the post-burn-in sample variance (divisor ``K - k0``)."""
    kept = _check_burn_in(samples, k0)
    return float(np.mean((kept - kept.mean(axis=0)) ** 2))


def acceptance_rate(accepted, proposed) -> Tuple[np.ndarray, float]:
    """Per-block and overall acceptance rates; blocks never proposed give ``nan``."""
    accepted = np.asarray(accepted, dtype=np.float64)
    proposed = np.asarray(proposed, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_block = np.where(proposed > 0, accepted / np.where(proposed > 0, proposed, 1), np.nan)
    total = proposed.sum()
    return per_block, float(accepted.sum() / total) if total > 0 else float("nan")


def metrics_report(samples, k0, accepted, proposed, seconds, truth=None) -> dict:
    """AR/CT/MSE/MSV summary of a run; ``MSE`` is present only when ``truth`` is known."""
    per_block, overall = acceptance_rate(accepted, proposed)
    out = {"AR": overall, "CT": float(seconds), "MSV": msv(samples, k0)}
    if truth is not None:
        out["MSE"] = mse(samples, truth, k0)
    out["AR_per_block"] = [None if np.isnan(v) else float(v) for v in per_block]
    return out


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass(frozen=True, eq=False)
class PosteriorOracle:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def mean_variance(self) -> float:
        return float(np.mean(np.diag(self.covariance)))


def _simpson_gramian(E_step, n, T, panels, sigma):
    """Composite Simpson rule for ``sigma^2 int_0^T e^{-Mt} e^{-Mt}^T dt``.

    ``E_step`` is ``e^{-M T / panels}``; the nodes are reached by repeated
    multiplication.
    """
    dt = T / panels
    E = np.eye(n)
    acc = np.zeros((n, n))
    for k in range(panels + 1):
        w = 1.0 if k in (0, panels) else (4.0 if k % 2 else 2.0)
        acc += w * (E @ E.T)
        E = E @ E_step
    return sigma**2 * acc * dt / 3.0


def _simpson_weights(panels):
    w = np.full(panels + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w


def _settle(rule, quad_steps, rtol, max_doublings):
    if quad_steps < 2 or quad_steps % 2:
        raise ValueError(f"Simpson's rule needs an even panel count >= 2, got {quad_steps}")
    panels = quad_steps
    prev = rule(panels)
    for _ in range(max_doublings):
        panels *= 2
        cur = rule(panels)
        scale = np.abs(cur).max()
        if scale == 0.0 or np.abs(cur - prev).max() <= rtol * scale:
            return cur
        prev = cur
    raise AccuracyError(f"noise Gramian did not settle to {rtol:g} relative with {panels} panels")


def is_circulant(M) -> bool:
    return bool(np.array_equal(M, linalg.circulant(M[:, 0])))


def noise_gramian(M, sigma, T, quad_steps=400, rtol=1e-8, max_doublings=6, method="auto") -> np.ndarray:
    """``sigma^2 int_0^T e^{-Mt} e^{-Mt}^T dt`` by composite Simpson quadrature.

    The panel count starts at ``quad_steps`` and doubles until two successive
    results agree to ``rtol``.  ``method="dense"`` integrates the matrix
    integrand directly.  ``method="fourier"`` (the default for circulant
    ``M``) uses that a circulant generator is diagonal in the Fourier basis,
    so the integrand is the circulant matrix with symbol
    ``exp(-2 Re(lambda_k) t)`` and only ``n`` scalar integrals are needed.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if method == "auto":
        method = "fourier" if is_circulant(M) else "dense"
    if method == "dense":
        return _settle(lambda p: _simpson_gramian(linalg.expm(-M * T / p), n, T, p, sigma), quad_steps, rtol, max_doublings)
    if method != "fourier":
        raise ValueError(f"unknown quadrature method {method!r}")
    if not is_circulant(M):
        raise ValueError("the Fourier route needs a circulant generator")
    rate = 2.0 * np.fft.fft(M[:, 0]).real

    def rule(panels):
        t = np.linspace(0.0, T, panels + 1)
        vals = np.exp(-np.outer(rate, t))
        return sigma**2 * (vals @ _simpson_weights(panels)) * (T / panels) / 3.0

    symbol = _settle(rule, quad_steps, rtol, max_doublings)
    return linalg.circulant(np.fft.ifft(symbol).real)


def exact_linear_posterior(
    model: ModelSpec,
    prior: GaussianPrior,
    obs: ObservationModel,
    T: float,
    quad_steps: int = 400,
) -> PosteriorOracle:
    """Gaussian posterior of ``x(0)`` for the linear flow observed at time ``T``.

    With ``G = H e^{MT}`` the data are ``y = G x(0) + e`` where ``e`` has
    covariance ``G Q G^T + R`` and ``Q`` is the noise Gramian.
    """
    if model.name != "linear_flow":
        raise UnsupportedSchemeError(f"the closed-form posterior needs the linear flow model, got {model.name!r}")
    if prior.n != model.n or obs.n != model.n:
        raise ValueError("prior, observation and model dimensions disagree")
    M = linear_flow_matrix(model)
    sigma = float(model.params[3])
    eMT = linalg.expm(M * T)
    G = obs.H @ eMT
    if sigma > 0:
        Q = noise_gramian(M, sigma, T, quad_steps)
        noise = G @ Q @ G.T + obs.R
    else:
        noise = obs.R.copy()
    noise = (noise + noise.T) / 2
    cn = linalg.cho_factor(noise, lower=True)
    prec = prior.precision + G.T @ linalg.cho_solve(cn, G)
    prec = (prec + prec.T) / 2
    cp = linalg.cho_factor(prec, lower=True)
    cov = linalg.cho_solve(cp, np.eye(model.n))
    cov = (cov + cov.T) / 2
    mean = linalg.cho_solve(cp, prior.precision @ prior.mean + G.T @ linalg.cho_solve(cn, obs.y))
    return PosteriorOracle(mean, cov)
