"""Deterministic counter-based random streams.

Draw ``i`` of a stream is a pure function of ``(seed, i)``: the word
generator is the splitmix64 finalizer applied to ``seed + (i + 1) * GAMMA``,
so the same ``(seed, counter)`` state replays the same values on every
platform and process.  Gaussians come from Box-Muller over consecutive
uniform pairs, which keeps them reproducible without relying on any
library's internal normal sampler.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ParameterError

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

_MASK64 = (1 << 64) - 1
# 2**-53; multiplying a 53-bit integer by this yields a float in [0, 1).
_INV53 = float(np.ldexp(1.0, -53))


def _finalize(z: np.ndarray) -> np.ndarray:
    # splitmix64 output function; uint64 arithmetic wraps silently in numpy
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def derive_seed(root: int, *parts: object) -> int:
    """Derive a child seed from a root seed and a path of labels.

    Labels may be ints or strings; distinct paths give independent seeds.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(int(root & _MASK64).to_bytes(8, "little"))
    for part in parts:
        if isinstance(part, bool) or not isinstance(part, (int, str)):
            raise ParameterError(f"seed path labels must be int or str, got {part!r}")
        if isinstance(part, int):
            h.update(b"i" + int(part & _MASK64).to_bytes(8, "little"))
        else:
            data = part.encode("utf-8")
            h.update(b"s" + len(data).to_bytes(4, "little") + data)
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """Counter-based random stream with explicit, inspectable state."""

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int, counter: int = 0):
        if counter < 0:
            raise ParameterError("counter must be non-negative")
        self.seed = int(seed & _MASK64)
        self.counter = int(counter)

    def _words(self, n: int) -> np.ndarray:
        if n < 0:
            raise ParameterError("draw count must be non-negative")
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        return _finalize(np.uint64(self.seed) + idx * _GAMMA)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles uniform on [0, 1), one word per draw."""
        return (self._words(n) >> np.uint64(11)).astype(np.float64) * _INV53

    def normal(self, n: int) -> np.ndarray:
        """``n`` standard Gaussians via Box-Muller; consumes 2*ceil(n/2) words."""
        pairs = (n + 1) // 2
        w = self._words(2 * pairs)
        # u1 in (0, 1] so the log never sees zero
        u1 = ((w[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53
        u2 = (w[1::2] >> np.uint64(11)).astype(np.float64) * _INV53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def integers(self, low: int, high: int, n: int) -> np.ndarray:
        """``n`` int64 draws uniform on [low, high)."""
        if high <= low:
            raise ParameterError("integers() requires high > low")
        span = high - low
        return low + np.minimum(
            (self.uniform(n) * span).astype(np.int64), span - 1
        )

    def bernoulli(self, p: float, n: int) -> np.ndarray:
        """``n`` booleans, each True with probability ``p``."""
        if not 0.0 <= p <= 1.0:
            raise ParameterError("bernoulli probability must lie in [0, 1]")
        return self.uniform(n) < p

    def split(self, *path: object) -> "RngStream":
        """Independent child stream addressed by a label path."""
        return RngStream(derive_seed(self.seed, *path))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed:#x}, counter={self.counter})"
