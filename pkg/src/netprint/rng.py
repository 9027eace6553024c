"""Deterministic pseudo-random number generation.

Every stochastic step in this package (dataset shuffling, bootstrap
sampling, per-node feature selection, synthetic data) draws from the two
generators below, so a seed fully determines all outputs and the algorithms
are simple enough to reimplement bit-for-bit in another language:

* ``SplitMix64`` expands a single 64-bit seed into a stream of 64-bit
  values.  It seeds ``Xoshiro256StarStar`` states and derives independent
  per-worker seeds.
* ``Xoshiro256StarStar`` (xoshiro256**) is the workhorse generator.

Bounded integers use rejection sampling, never a bare modulo, so draws are
exactly uniform.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1

_GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_SM_MULT_1 = 0xBF58476D1CE4E5B9
_SM_MULT_2 = 0x94D049BB133111EB


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class SplitMix64:
    """64-bit seed expander (Steele, Lea & Flood's SplitMix64)."""

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN_GAMMA) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _SM_MULT_1) & MASK64
        z = ((z ^ (z >> 27)) * _SM_MULT_2) & MASK64
        return z ^ (z >> 31)


class Xoshiro256StarStar:
    """xoshiro256** 1.0 (Blackman & Vigna), state seeded via SplitMix64."""

    __slots__ = ("_s0", "_s1", "_s2", "_s3", "_gauss_cache")

    def __init__(self, state: tuple[int, int, int, int]) -> None:
        if not any(state):
            raise ValueError("xoshiro256** state must not be all zero")
        self._s0, self._s1, self._s2, self._s3 = (w & MASK64 for w in state)
        self._gauss_cache: float | None = None

    @classmethod
    def from_seed(cls, seed: int) -> "Xoshiro256StarStar":
        """Fill the 256-bit state with four SplitMix64 outputs of ``seed``."""
        sm = SplitMix64(seed)
        return cls((sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()))

    def next_u64(self) -> int:
        result = (_rotl((self._s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (self._s1 << 17) & MASK64
        self._s2 ^= self._s0
        self._s3 ^= self._s1
        self._s1 ^= self._s2
        self._s0 ^= self._s3
        self._s2 ^= t
        self._s3 = _rotl(self._s3, 45)
        return result

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound) by rejection sampling (no modulo bias)."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        # Largest multiple of bound that fits in 64 bits; values at or above
        # it would skew the distribution and are redrawn.
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % bound

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle, iterating i = n-1 .. 1, j = below(i+1)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, population: int, k: int) -> list[int]:
        """k distinct indices from range(population), partial Fisher-Yates order."""
        if not 0 <= k <= population:
            raise ValueError(f"cannot sample {k} of {population}")
        pool = list(range(population))
        for i in range(k):
            j = i + self.below(population - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Normal deviate via Box-Muller; the paired value is cached."""
        z = self._gauss_cache
        if z is not None:
            self._gauss_cache = None
        else:
            u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53  # (0, 1], log-safe
            u2 = (self.next_u64() >> 11) * 2.0**-53
            r = math.sqrt(-2.0 * math.log(u1))
            z = r * math.cos(2.0 * math.pi * u2)
            self._gauss_cache = r * math.sin(2.0 * math.pi * u2)
        return mu + sigma * z
