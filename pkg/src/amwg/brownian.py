"""Fixed Brownian-increment realizations for the pseudo-marginal likelihood."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_MAGIC = b"AMWGBM01"
_HEADER = struct.Struct("<8s5q")


@dataclass(frozen=True, eq=False)
class BrownianStore:
    """Standard-normal increments indexed ``(realization, step, block, component)``.

    Increments are stored unscaled; integrators multiply by ``sqrt(h)``.
    An ODE store has ``steps == 0`` and holds no data, only the realization
    count (normally 1).
    """

    increments: np.ndarray

    def __post_init__(self):
        inc = self.increments
        if inc.ndim != 4:
            raise ValueError(f"increments must be 4-d (S, steps, m, b), got shape {inc.shape}")
        inc = np.ascontiguousarray(inc, dtype=np.float64)
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def S(self) -> int:
        return self.increments.shape[0]

    @property
    def steps(self) -> int:
        return self.increments.shape[1]

    @property
    def m(self) -> int:
        return self.increments.shape[2]

    @property
    def b(self) -> int:
        return self.increments.shape[3]

    @property
    def is_empty(self) -> bool:
        return self.steps == 0

    def save(self, path) -> None:
        """Write a little-endian float64 dump with a five-dimension header."""
        S, steps, m, b = self.increments.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, S, steps, m, b, self.increments.size))
            fh.write(self.increments.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "BrownianStore":
        raw = Path(path).read_bytes()
        magic, S, steps, m, b, size = _HEADER.unpack_from(raw)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a Brownian store dump")
        if size != S * steps * m * b:
            raise ValueError(f"{path}: header size {size} disagrees with dimensions")
        data = np.frombuffer(raw, dtype="<f8", count=size, offset=_HEADER.size)
        return cls(data.astype(np.float64).reshape(S, steps, m, b))


def sample_store(seed, S: int, m: int, b: int, steps: int) -> BrownianStore:
    """Draw ``S`` independent increment realizations, deterministic in ``seed``."""
    for name, v in (("S", S), ("m", m), ("b", b), ("steps", steps)):
        if v < 1:
            raise ValueError(f"{name} must be positive, got {v}")
    rng = np.random.default_rng(seed)
    return BrownianStore(rng.standard_normal((S, steps, m, b)))


def empty_store(m: int, b: int, S: int = 1) -> BrownianStore:
    """Placeholder store for ODE models, where no noise is sampled."""
    return BrownianStore(np.zeros((S, 0, m, b)))
