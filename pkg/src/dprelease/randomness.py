"""Randomness sources for noise generation.

All noise in the library is drawn through a :class:`RandomSource`. The
default source reads from the operating system CSPRNG (``os.urandom``),
so noise is never produced by a guessable generator. A seeded test-mode
source exists for reproducible runs; it is only constructed through
:func:`seeded_source` so that accidental seeding in production code paths
stands out in review.
"""

from __future__ import annotations

import os
import random
import threading

import numpy as np

_INV_2_53 = 2.0**-53


_BUFFER_SIZE = 8192


class RandomSource:
    """Uniform bit/float source backed by the OS CSPRNG.

    Small draws are served from an internal buffer refilled in blocks;
    consumption order is deterministic, so seeded subclasses stay
    reproducible. All draws are serialized by a lock, making one source
    safely shareable across threads.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._buffer = np.empty(0, dtype=np.float64)
        self._cursor = 0

    @property
    def is_deterministic(self) -> bool:
        return False

    def _fill(self, size: int) -> np.ndarray:
        raw = np.frombuffer(os.urandom(8 * size), dtype=np.uint64)
        return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53

    def uniforms(self, size: int) -> np.ndarray:
        """``size`` doubles uniform on the open interval (0, 1).

        Values are (k + 0.5) / 2^53 for a 53-bit integer k, so neither
        endpoint is reachable and log/sign transforms need no guards.
        """
        if size > _BUFFER_SIZE // 2:
            with self._lock:
                return self._fill(size)
        with self._lock:
            if self._cursor + size > len(self._buffer):
                self._buffer = self._fill(_BUFFER_SIZE)
                self._cursor = 0
            out = self._buffer[self._cursor:self._cursor + size].copy()
            self._cursor += size
            return out

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])

    def bits(self, k: int) -> int:
        """A uniform k-bit integer."""
        nbytes = (k + 7) // 8
        value = int.from_bytes(os.urandom(nbytes), "big")
        return value >> (8 * nbytes - k)

    def integer(self, n: int) -> int:
        """A uniform integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        k = n.bit_length()
        while True:
            value = self.bits(k)
            if value < n:
                return value


class SeededSource(RandomSource):
    """Deterministic source for test mode; reproduces byte-identical runs.

    Bulk uniforms come from a seeded PCG64 stream and single bit draws from
    a seeded ``random.Random``; the two streams are independent but both
    are fully determined by the seed.
    """

    def __init__(self, seed: int) -> None:
        super().__init__()
        self._np = np.random.Generator(np.random.PCG64(seed))
        self._rng = random.Random(seed ^ 0x9E3779B97F4A7C15)

    @property
    def is_deterministic(self) -> bool:
        return True

    def _fill(self, size: int) -> np.ndarray:
        raw = self._np.integers(0, 1 << 53, size=size, dtype=np.uint64)
        return (raw.astype(np.float64) + 0.5) * _INV_2_53

    def bits(self, k: int) -> int:
        with self._lock:
            return self._rng.getrandbits(k)


def secure_source() -> RandomSource:
    return RandomSource()


def seeded_source(seed: int) -> RandomSource:
    return SeededSource(seed)


def laplace(scale: float, rng: RandomSource, size: int | None = None):
    """Laplace(0, scale) samples via inverse CDF on open-interval uniforms.

    Returns a float for size=None, else an ndarray of length ``size``.
    """
    if not (scale > 0.0) or not np.isfinite(scale):
        raise ValueError(f"Laplace scale must be positive and finite, got {scale}")
    n = 1 if size is None else size
    u = rng.uniforms(n) - 0.5  # in (-0.5, 0.5)
    draws = -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    if size is None:
        return float(draws[0])
    return draws
