"""Deterministic random stream shared by synthetic data, subsampling and the
evolutionary search.

SplitMix64 is integer-exact, so the stream is bit-identical across platforms
and library versions; every caller documents its own consumption order.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Sequential 64-bit PRNG (splitmix64)."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform in [0, 1) with 53-bit resolution; one draw."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n); rejection sampling, no modulo bias."""
        if n <= 0:
            raise ValueError(f"randint bound must be positive, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def chance(self, p: float) -> bool:
        """True with probability p; always consumes exactly one draw."""
        return self.random() < p

    def gauss(self) -> float:
        """Standard normal via Box-Muller.

        Consumes two draws (the first is re-drawn while it is exactly zero).
        """
        u1 = self.random()
        while u1 == 0.0:
            u1 = self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def sample_sorted(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), ascending (Floyd's algorithm).

        Consumes exactly k randint draws.
        """
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n}")
        chosen: set[int] = set()
        for j in range(n - k, n):
            t = self.randint(j + 1)
            chosen.add(t if t not in chosen else j)
        return sorted(chosen)
