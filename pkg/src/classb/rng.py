"""Reproducible random numbers: xoshiro256** over a fixed bank of lanes.

Each lane is an independent xoshiro256** state seeded through splitmix64
from ``seed ^ (lane * golden)``.  A draw of ``count`` values advances every
lane ``ceil(count / LANES)`` times and reads the results step-major, so the
stream is a pure function of the seed and is identical on every platform.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["Xoshiro", "LANES", "DEFAULT_SEED", "default_seed", "splitmix64"]

LANES = 1024
DEFAULT_SEED = 20240607
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MASK = (1 << 64) - 1


def default_seed() -> int:
    """The CLASSB_SEED environment variable if set, else DEFAULT_SEED."""
    text = os.environ.get("CLASSB_SEED")
    if text is None or text.strip() == "":
        return DEFAULT_SEED
    return int(text, 0)


def splitmix64(state: np.ndarray):
    """One splitmix64 step on an array of uint64 states; returns (new_state, output)."""
    with np.errstate(over="ignore"):
        state = state + _GOLDEN
        z = state.copy()
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return state, z


def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class Xoshiro:
    """Vectorized xoshiro256** with :data:`LANES` lanes."""

    def __init__(self, seed: int):
        seed = int(seed) & _MASK
        lanes = np.arange(LANES, dtype=np.uint64)
        with np.errstate(over="ignore"):
            sm = np.uint64(seed) ^ (lanes * _GOLDEN)
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self.s = s

    def _step(self) -> np.ndarray:
        s0, s1, s2, s3 = self.s
        with np.errstate(over="ignore"):
            result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 = s2 ^ s0
        s3 = s3 ^ s1
        s1 = s1 ^ s2
        s0 = s0 ^ s3
        s2 = s2 ^ t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def integers64(self, count: int) -> np.ndarray:
        steps = -(-count // LANES)
        out = np.empty(steps * LANES, dtype=np.uint64)
        for i in range(steps):
            out[i * LANES:(i + 1) * LANES] = self._step()
        return out[:count]

    def uniform(self, count: int) -> np.ndarray:
        """Doubles in [0, 1) from the top 53 bits."""
        return (self.integers64(count) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def uniform_open(self, count: int) -> np.ndarray:
        """Doubles in (0, 1), safe for logarithms."""
        return ((self.integers64(count) >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / (1 << 53))

    def normal(self, count: int) -> np.ndarray:
        """Standard normals by Box-Muller (both outputs of each pair are used)."""
        half = -(-count // 2)
        u1 = self.uniform_open(half)
        u2 = self.uniform(half)
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * half)
        out[0::2] = r * np.cos(2 * np.pi * u2)
        out[1::2] = r * np.sin(2 * np.pi * u2)
        return out[:count]

    def gamma(self, shape: float, count: int) -> np.ndarray:
        """Gamma(shape, 1) by Marsaglia-Tsang squeeze rejection."""
        if shape < 1:
            boost = self.uniform_open(count) ** (1.0 / shape)
            return self.gamma(shape + 1.0, count) * boost
        d = shape - 1.0 / 3.0
        c = 1.0 / np.sqrt(9.0 * d)
        out = np.empty(count)
        todo = np.arange(count)
        while todo.size:
            k = todo.size
            z = self.normal(k)
            u = self.uniform_open(k)
            v = (1.0 + c * z) ** 3
            ok = v > 0
            with np.errstate(invalid="ignore", divide="ignore"):
                accept = ok & (np.log(u) < 0.5 * z * z + d - d * v + d * np.log(np.where(ok, v, 1.0)))
            out[todo[accept]] = d * v[accept]
            todo = todo[~accept]
        return out
