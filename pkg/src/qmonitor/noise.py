"""Fixed-step time grids and reproducible Brownian increments.

Every stochastic integrator in the package consumes Gaussian increments
produced here.  Randomness is addressed by a ``(seed, stream_id)`` pair
mapped onto the 128-bit key of a counter-based Philox generator, so
ensemble member ``i`` can be regenerated in isolation, in any order, and
on any worker, without sharing generator state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_U64 = 2**64


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = t0 + k*dt for k = 0..n_steps.

    Node times are always recomputed from the index k; they are never
    accumulated by repeated addition, so t_k carries a single rounding
    error regardless of n_steps.
    """

    dt: float
    n_steps: int
    t0: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt <= 0.0:
            raise ConfigError(f"dt must be positive and finite, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigError(f"n_steps must be an integer >= 1, got {self.n_steps}")
        if not np.isfinite(self.t0):
            raise ConfigError(f"t0 must be finite, got {self.t0}")

    @property
    def t_end(self) -> float:
        return self.t0 + self.n_steps * self.dt

    def times(self) -> np.ndarray:
        """All node times t_0..t_{n_steps}, length n_steps + 1."""
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def t_at(self, k: int) -> float:
        return self.t0 + k * self.dt

    def index_at(self, t: float) -> int:
        """Nearest node index to time t (clipped to the grid)."""
        k = int(round((t - self.t0) / self.dt))
        return min(max(k, 0), self.n_steps)


@dataclass(frozen=True)
class RngStream:
    """Address of an independent random substream.

    Identical (seed, stream_id) pairs reproduce identical streams;
    distinct stream_ids under one seed give statistically independent
    streams.  Both fields must fit in 64 bits.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if int(v) != v or not (0 <= v < _U64):
                raise ConfigError(f"{name} must be an integer in [0, 2**64), got {v}")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this substream."""
        key = int(self.seed) | (int(self.stream_id) << 64)
        return np.random.Generator(np.random.Philox(key=key))

    def with_stream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


@dataclass(frozen=True)
class NoisePath:
    """Increments dW_k ~ N(0, dt) attached to a grid, one per step."""

    grid: TimeGrid
    increments: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim != 1 or inc.shape[0] != self.grid.n_steps:
            raise ConfigError(
                f"increments must be a 1-d array of length n_steps="
                f"{self.grid.n_steps}, got shape {inc.shape}"
            )
        object.__setattr__(self, "increments", inc)


def sample_noise(grid: TimeGrid, rng: RngStream) -> NoisePath:
    """Draw the i.i.d. N(0, dt) increments of one Brownian path."""
    if not isinstance(grid, TimeGrid):
        raise ConfigError("sample_noise expects a TimeGrid")
    gen = rng.generator()
    inc = gen.standard_normal(grid.n_steps) * np.sqrt(grid.dt)
    return NoisePath(grid, inc)


def partial_sums(increments) -> np.ndarray:
    """Cumulative sums prefixed with 0: [0, a, a+b, ...]."""
    inc = np.asarray(increments, dtype=float)
    out = np.empty(inc.shape[0] + 1)
    out[0] = 0.0
    np.cumsum(inc, out=out[1:])
    return out


def brownian_partial_sums(path) -> np.ndarray:
    """Brownian node values B_{t_k} from a NoisePath (B_{t_0} = 0).

    Also accepts a bare increment array, in which case it reduces to
    ``partial_sums``.
    """
    if isinstance(path, NoisePath):
        return partial_sums(path.increments)
    return partial_sums(path)


def noise_matrix(grid: TimeGrid, base: RngStream, n_paths: int,
                 stream_offset: int = 0) -> np.ndarray:
    """Increments for paths 0..n_paths-1 on streams (base.seed, offset+i).

    Row i is bit-identical to ``sample_noise(grid, RngStream(seed,
    stream_offset+i))``, which is what makes vectorized ensemble
    integrators reproduce the one-path-at-a-time construction exactly;
    the offset lets a large ensemble run in path chunks without
    changing any path's noise.
    """
    if n_paths < 1:
        raise ConfigError(f"n_paths must be >= 1, got {n_paths}")
    if stream_offset < 0:
        raise ConfigError(f"stream_offset must be >= 0, got {stream_offset}")
    out = np.empty((n_paths, grid.n_steps))
    root = np.sqrt(grid.dt)
    for i in range(n_paths):
        gen = RngStream(base.seed, stream_offset + i).generator()
        out[i] = gen.standard_normal(grid.n_steps)
    out *= root
    return out
