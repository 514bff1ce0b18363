"""Time grids and counter-based random streams.

The fine grid carries every simulated path; the Picard map sends a fine
point to the last coarse point ``floor(n s) / n``.  Random numbers come from
a SplitMix64 counter hash: value ``c`` of a stream is a pure function of
``(master_seed, tag, particle, replicate, c)``, so particle ``k`` draws the
same noise whatever the ensemble size, block layout, or worker count.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from numba import njit

from .errors import ConfigurationError

__all__ = [
    "TimeGrid",
    "make_grid",
    "RngStream",
    "gaussian_increments",
    "stream_keys",
    "normal_table",
    "uniform_table",
]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class TimeGrid:
    """Fine grid ``{k T / M}`` with an optional Picard step ``1/n``."""

    horizon: float
    fine_steps: int
    picard_n: int | None = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigurationError("horizon must be positive", "grid.T")
        if int(self.fine_steps) != self.fine_steps or self.fine_steps < 1:
            raise ConfigurationError("fine_steps must be a positive integer", "grid.M")
        if self.picard_n is not None:
            self.coarse_stride_for(self.picard_n)

    @property
    def dt(self) -> float:
        return self.horizon / self.fine_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.fine_steps + 1) * self.dt

    def coarse_stride_for(self, n: int) -> int:
        """Fine steps per coarse interval ``1/n``; requires ``M`` divisible by ``n T``."""
        if int(n) != n or n < 1:
            raise ConfigurationError(f"Picard n must be a positive integer, got {n}", "grid.n_set")
        nt = Fraction(self.horizon).limit_denominator(10**6) * int(n)
        if nt.denominator != 1:
            raise ConfigurationError(
                f"n*T = {float(nt)} is not an integer (n={n}, T={self.horizon})", "grid.n_set"
            )
        nt = int(nt)
        if self.fine_steps < nt or self.fine_steps % nt:
            raise ConfigurationError(
                f"M={self.fine_steps} is not divisible by n*T={nt}", "grid.M"
            )
        return self.fine_steps // nt

    @property
    def coarse_stride(self) -> int:
        if self.picard_n is None:
            raise ConfigurationError("grid has no Picard step", "grid.n_set")
        return self.coarse_stride_for(self.picard_n)

    def with_n(self, n: int) -> "TimeGrid":
        return replace(self, picard_n=int(n))

    def tau(self, s: float) -> float:
        """Last coarse point at or before ``s``."""
        n = self.picard_n
        if n is None:
            raise ConfigurationError("grid has no Picard step", "grid.n_set")
        return math.floor(n * s + 1e-12) / n

    def tau_index(self, k):
        """Fine index of the coarse point preceding fine index ``k``."""
        stride = self.coarse_stride
        return (np.asarray(k) // stride) * stride

    def step_of(self, t: float) -> int:
        """Fine index of time ``t``; raises if ``t`` is not a grid point."""
        k = round(t / self.dt)
        if abs(k * self.dt - t) > 1e-9 * max(1.0, self.horizon) or not 0 <= k <= self.fine_steps:
            raise ValueError(f"t={t} is not on the fine grid")
        return int(k)


def make_grid(T: float, M: int, n: int | None = None) -> TimeGrid:
    return TimeGrid(float(T), int(M), None if n is None else int(n))


def _tag_hash(tag: str) -> int:
    return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")


def _mix_int(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _replicate_base(master_seed: int, tag: str, replicate: int) -> int:
    g = int(_GOLDEN)
    base = _mix_int(_mix_int(master_seed + g) ^ _tag_hash(tag))
    return _mix_int(base + g * (replicate + 1))


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _particle_keys(base, particles):
    out = np.empty(particles.shape[0], dtype=np.uint64)
    g2 = np.uint64(0xD1B54A32D192ED03)
    for i in range(particles.shape[0]):
        out[i] = _mix64(base ^ _mix64(np.uint64(particles[i] + 1) * g2))
    return out


@njit(cache=True, inline="always")
def _unit(key, c):
    return np.float64(_mix64(key + np.uint64(c + 1) * _GOLDEN) >> np.uint64(11)) * (
        1.0 / 9007199254740992.0
    )


@njit(cache=True)
def _normal_table(keys, start, count, out):
    two_pi = 2.0 * math.pi
    for j in range(keys.shape[0]):
        key = keys[j]
        c = start
        end = start + count
        while c < end:
            p = c >> 1
            u1 = _unit(key, 2 * p)
            u2 = _unit(key, 2 * p + 1)
            r = math.sqrt(-2.0 * math.log(1.0 - u1))
            if c & 1:
                out[c - start, j] = r * math.sin(two_pi * u2)
                c += 1
            else:
                out[c - start, j] = r * math.cos(two_pi * u2)
                if c + 1 < end:
                    out[c + 1 - start, j] = r * math.sin(two_pi * u2)
                c += 2


@njit(cache=True)
def _uniform_table(keys, start, count, out):
    for j in range(keys.shape[0]):
        for c in range(count):
            out[c, j] = _unit(keys[j], start + c)


def stream_keys(master_seed: int, tag: str, particles, replicate: int = 0) -> np.ndarray:
    """uint64 keys for streams ``(tag, particle, replicate)``, one per particle."""
    base = np.uint64(_replicate_base(int(master_seed), tag, int(replicate)))
    return _particle_keys(base, np.asarray(particles, dtype=np.int64))


def normal_table(keys: np.ndarray, start: int, count: int) -> np.ndarray:
    """Standard normals at counters ``start .. start+count-1``; shape ``(count, len(keys))``."""
    out = np.empty((count, keys.shape[0]))
    _normal_table(keys, int(start), int(count), out)
    return out


def uniform_table(keys: np.ndarray, start: int, count: int) -> np.ndarray:
    """Uniforms on [0, 1) at counters ``start .. start+count-1``."""
    out = np.empty((count, keys.shape[0]))
    _uniform_table(keys, int(start), int(count), out)
    return out


@dataclass(frozen=True)
class RngStream:
    """Identifies one reproducible random sequence.

    A stream is used either for normals or for uniforms; both views index the
    same counters.
    """

    master_seed: int
    tag: str
    particle: int = 0
    replicate: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= _MASK:
            raise ConfigurationError("master seed must fit in 64 bits", "seed")

    @property
    def key(self) -> np.ndarray:
        return stream_keys(self.master_seed, self.tag, [self.particle], self.replicate)

    def normals(self, count: int, start: int = 0) -> np.ndarray:
        return normal_table(self.key, start, count)[:, 0]

    def uniforms(self, count: int, start: int = 0) -> np.ndarray:
        return uniform_table(self.key, start, count)[:, 0]

    def child(self, **changes) -> "RngStream":
        return replace(self, **changes)


def gaussian_increments(stream: RngStream, grid: TimeGrid, dim: int) -> np.ndarray:
    """``(M, dim)`` table of independent N(0, dt) increments.

    Increment ``m`` component ``d`` uses counter ``m * dim + d``.
    """
    z = stream.normals(grid.fine_steps * dim)
    return z.reshape(grid.fine_steps, dim) * math.sqrt(grid.dt)
