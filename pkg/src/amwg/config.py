"""Experiment configuration and problem assembly.

A config file is flat TOML: one ``key = value`` per line, no tables.  Every
field has a default, so an empty file describes a small Lorenz 96 run.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np
import tomli

from .brownian import BrownianStore, sample_store
from .integrate import solve_full, time_steps
from .likelihood import ObservationModel, load_vector_csv, observation_matrix
from .model import ModelSpec, linear_flow, lorenz96
from .prior import GaussianPrior, lorenz96_equilibrium_prior, lorenz96_trajectory, sample_prior
from .sampler import SamplerConfig

MODELS = ("lorenz96", "linear_flow")


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass
class ExperimentConfig:
    model: str = "lorenz96"
    n: int = 40
    b: int = 2
    forcing: float = 8.0
    l: float = 0.2
    mu: float = 0.1
    nu: float = 0.1
    w: float = 2.0
    sigma_x: float = 0.1

    sampler: str = "amwg"
    L: int = 4
    S: int = 1
    K: int = 1000
    k0: Optional[int] = None
    h: float = 0.01
    T: float = 0.4
    scheme: Optional[str] = None
    acceptance: str = "full"
    obs_window: int = 20
    parallel: bool = False
    threads: int = 1
    seed: int = 0
    resync_every: int = 0

    observation: str = "every_other"
    obs_std: Optional[float] = None
    data: Optional[str] = None
    truth: Optional[str] = None

    prior: Optional[str] = None
    taper_radius: int = 2
    prior_sim_length: float = 1000.0
    prior_burn: float = 10.0
    prior_jitter: float = 1e-8

    out: str = "out"
    samples_format: str = "csv"
    radius_candidates: List[int] = field(default_factory=lambda: [1, 2, 4])
    radius_trials: int = 500
    bench_ns: List[int] = field(default_factory=lambda: [40, 80, 160, 320])
    bench_sweeps: int = 2

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError("model", f"must be one of {MODELS}, got {self.model!r}")
        if self.scheme is None:
            self.scheme = "rk4" if self.model == "lorenz96" else "em"
        if self.obs_std is None:
            self.obs_std = 1.0 if self.model == "lorenz96" else 0.1
        if self.prior is None:
            self.prior = "equilibrium" if self.model == "lorenz96" else "standard"
        if self.truth is None:
            self.truth = "attractor" if self.model == "lorenz96" else "prior"
        if self.k0 is None:
            self.k0 = self.K // 10
        self._check()

    def _check(self):
        def need(ok, name, msg):
            if not ok:
                raise ConfigError(name, msg)

        need(self.n >= 1, "n", f"must be positive, got {self.n}")
        need(self.b >= 1 and self.n % self.b == 0, "b", f"n={self.n} is not divisible by b={self.b}")
        need(self.sampler in ("mwg", "amwg"), "sampler", f"must be mwg or amwg, got {self.sampler!r}")
        need(self.K >= 1, "K", f"must be at least 1, got {self.K}")
        need(0 <= self.k0 < self.K, "k0", f"must lie in [0, K={self.K}), got {self.k0}")
        need(self.S >= 1, "S", f"must be at least 1, got {self.S}")
        need(self.scheme in ("em", "rk4"), "scheme", f"must be em or rk4, got {self.scheme!r}")
        need(not (self.scheme == "rk4" and self.model == "linear_flow" and self.sigma_x != 0),
             "scheme", "rk4 needs sigma_x = 0")
        need(self.acceptance in ("full", "local"), "acceptance", f"must be full or local, got {self.acceptance!r}")
        need(self.obs_std > 0, "obs_std", f"must be positive, got {self.obs_std}")
        need(self.truth in ("prior", "attractor"), "truth", f"must be prior or attractor, got {self.truth!r}")
        need(not (self.truth == "attractor" and self.model != "lorenz96"), "truth", "attractor needs lorenz96")
        need(self.samples_format in ("csv", "npy"), "samples_format", f"must be csv or npy, got {self.samples_format!r}")
        need(self.radius_trials >= 1, "radius_trials", f"must be at least 1, got {self.radius_trials}")
        need(self.bench_sweeps >= 1, "bench_sweeps", f"must be at least 1, got {self.bench_sweeps}")
        need(list(self.bench_ns) == sorted(self.bench_ns), "bench_ns", "must be sorted ascending")
        need(self.threads >= 1, "threads", f"must be at least 1, got {self.threads}")
        try:
            time_steps(self.h, self.T)
        except ValueError as exc:
            raise ConfigError("T", str(exc)) from None
        if self.model == "lorenz96":
            need(self.n % 2 == 0 and self.n >= 4, "n", "lorenz96 needs an even n >= 4")
            need(self.b >= 2, "b", "lorenz96 needs b >= 2")
        m = self.n // self.b
        if self.sampler == "amwg":
            need(self.L >= 0, "L", f"must be nonnegative, got {self.L}")
            need(self.L >= m // 2 or 2 * self.L + 2 <= m, "L", f"needs 2L+2 <= m={m} (or L >= {m // 2})")
        need(not (self.parallel and (self.sampler != "amwg" or self.acceptance != "local")),
             "parallel", "parallel groups need sampler = amwg and acceptance = local")

    @classmethod
    def from_toml(cls, path, **overrides) -> "ExperimentConfig":
        raw = tomli.loads(Path(path).read_text())
        nested = [k for k, v in raw.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(nested[0], "tables are not supported; use flat key = value pairs")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown key")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**raw)

    def to_toml(self, exclude=()) -> str:
        lines = []
        for k, v in asdict(self).items():
            if v is None or k in exclude:
                continue
            if isinstance(v, bool):
                lines.append(f"{k} = {'true' if v else 'false'}")
            elif isinstance(v, str):
                lines.append(f'{k} = "{v}"')
            else:
                lines.append(f"{k} = {v!r}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes) -> "ExperimentConfig":
        d = asdict(self)
        d.update(changes)
        return ExperimentConfig(**d)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            K=self.K,
            L=self.L if self.sampler == "amwg" else None,
            S=self.S,
            h=self.h,
            T=self.T,
            scheme=self.scheme,
            acceptance=self.acceptance,
            obs_window=self.obs_window,
            parallel=self.parallel,
            threads=self.threads,
            seed=self.seed,
            k0=self.k0,
            resync_every=self.resync_every,
        )


@dataclass(eq=False)
class Problem:
    """Everything a run needs besides the sampler settings."""

    model: ModelSpec
    prior: GaussianPrior
    obs: ObservationModel
    store: Optional[BrownianStore]
    truth: Optional[np.ndarray]


def build_model(cfg: ExperimentConfig) -> ModelSpec:
    if cfg.model == "lorenz96":
        return lorenz96(cfg.n, cfg.b, cfg.forcing)
    return linear_flow(cfg.n, cfg.b, cfg.l, cfg.mu, cfg.nu, cfg.w, cfg.sigma_x)


def _streams(seed):
    prior_ss, truth_ss, store_ss = np.random.SeedSequence([seed, 1]).spawn(3)
    return np.random.default_rng(prior_ss), np.random.default_rng(truth_ss), np.random.default_rng(store_ss)


def build_prior(cfg: ExperimentConfig, model: ModelSpec, rng) -> GaussianPrior:
    if cfg.prior == "standard":
        return GaussianPrior.standard(model.n, model.b)
    if cfg.prior == "equilibrium":
        if cfg.model != "lorenz96":
            raise ConfigError("prior", "the equilibrium prior needs lorenz96")
        return lorenz96_equilibrium_prior(
            model, cfg.prior_sim_length, cfg.prior_burn, cfg.taper_radius, cfg.h, rng, jitter=cfg.prior_jitter
        )
    p = GaussianPrior.load(cfg.prior)
    if p.n != model.n:
        raise ConfigError("prior", f"{cfg.prior} holds a prior on {p.n} components, model has {model.n}")
    return GaussianPrior(p.mean, p.covariance, model.b)


def build_problem(cfg: ExperimentConfig) -> Problem:
    """Model, prior, Brownian store and (synthetic unless ``data`` is set) observations.

    Synthetic data observe ``x(T)`` from a hidden truth: a prior draw, or for
    Lorenz 96 a state on the attractor.  The truth's own forcing is a fresh
    Brownian path independent of the sampler's store.
    """
    model = build_model(cfg)
    prior_rng, truth_rng, store_rng = _streams(cfg.seed)
    prior = build_prior(cfg, model, prior_rng)
    steps = time_steps(cfg.h, cfg.T)
    store = None if model.is_ode else sample_store(store_rng, cfg.S, model.m, model.b, steps)
    try:
        H = observation_matrix(cfg.observation, model.n)
    except (OSError, ValueError) as exc:
        raise ConfigError("observation", str(exc)) from None
    R = cfg.obs_std**2 * np.eye(H.shape[0])
    if cfg.data is not None:
        y = load_vector_csv(cfg.data)
        if y.size != H.shape[0]:
            raise ConfigError("data", f"{cfg.data} holds {y.size} values, H has {H.shape[0]} rows")
        return Problem(model, prior, ObservationModel(H, R, y), store, None)
    if cfg.truth == "attractor":
        x0 = sample_prior(prior, truth_rng)
        truth = lorenz96_trajectory(model, x0, 10.0, cfg.h, 10.0)[-1]
    else:
        truth = sample_prior(prior, truth_rng)
    truth_store = None if model.is_ode else sample_store(truth_rng, 1, model.m, model.b, steps)
    xT = solve_full(model, truth, truth_store, cfg.h, cfg.T, cfg.scheme).terminal()[0]
    obs = ObservationModel(H, R, np.zeros(H.shape[0]))
    return Problem(model, prior, obs.with_data(obs.simulate(xT, truth_rng)), store, truth)
