"""
Reproducible pseudo-random streams.

splitmix64 seeds a xoshiro256** generator. Both are defined on unsigned
64-bit integers, so a stream is reproducible from its seed on any platform
independent of numpy's generators.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import math
from collections.abc import MutableSequence, Sequence
from typing import TypeVar

from ..exceptions import SplurgeContextTransformerParameterError

# Module domains
DOMAINS = ["synthdata", "rng", "determinism"]

__all__ = ["MASK64", "splitmix64", "derive_seed", "Xoshiro256StarStar"]

MASK64 = 0xFFFF_FFFF_FFFF_FFFF

T = TypeVar("T")


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; return ``(next_state, output)``."""
    state = (state + 0x9E37_79B9_7F4A_7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB) & MASK64
    return state, z ^ (z >> 31)


def derive_seed(base: int, *indices: int) -> int:
    """Hash a base seed and a path of indices into a new 64-bit seed.

    ``derive_seed(seed, trial, class_index, shot)`` gives every scene its
    own stream, so scenes can be rendered in any order or in parallel.
    """
    state = base & MASK64
    _, out = splitmix64(state)
    for index in indices:
        _, out = splitmix64(out ^ (index & MASK64))
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256StarStar:
    """xoshiro256** generator with convenience draws."""

    __slots__ = ("_s",)

    def __init__(self, seed: int) -> None:
        state = seed & MASK64
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self._s = words

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        """Uniform float in ``[0, 1)`` from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def integers(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection, free of modulo bias."""
        if n <= 0:
            raise SplurgeContextTransformerParameterError(f"integers() needs n > 0, got {n}")
        limit = MASK64 - (MASK64 + 1) % n
        while True:
            value = self.next_u64()
            if value <= limit:
                return value % n

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        """Gaussian draw by the Box-Muller transform (one value per call)."""
        u1 = 1.0 - self.random()
        u2 = self.random()
        return mean + std * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def choice(self, items: Sequence[T]) -> T:
        return items[self.integers(len(items))]

    def shuffle(self, items: MutableSequence[T]) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.integers(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        order = list(range(n))
        self.shuffle(order)
        return order

    def sample(self, items: Sequence[T], k: int) -> list[T]:
        """``k`` distinct items, in draw order."""
        pool = list(items)
        picked: list[T] = []
        for _ in range(min(k, len(pool))):
            picked.append(pool.pop(self.integers(len(pool))))
        return picked
