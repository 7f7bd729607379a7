# svann-interpretation/utility/seeding.py

import hashlib
from typing import List, MutableSequence, TypeVar

import numpy as np

T = TypeVar("T")

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """SplitMix64 generator; the single source of shuffling randomness."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def next_below(self, bound: int) -> int:
        """Unbiased integer in [0, bound) by rejection."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % bound


def fisher_yates(items: MutableSequence[T], rng: SplitMix64) -> MutableSequence[T]:
    """In-place Fisher-Yates shuffle driven by SplitMix64. Returns the same sequence."""
    for i in range(len(items) - 1, 0, -1):
        j = rng.next_below(i + 1)
        items[i], items[j] = items[j], items[i]
    return items


def shuffled_indices(n: int, seed: int) -> List[int]:
    return list(fisher_yates(list(range(n)), SplitMix64(seed)))


def derive_seed(seed: int, stream: str) -> int:
    """
    Fans one experiment seed out into an independent 64-bit seed per named stage
    (e.g. "synth", "split", "init:A:ndvi"), so partial pipelines reproduce.
    """
    digest = hashlib.blake2b(stream.encode("utf-8"), digest_size=8).digest()
    salt = int.from_bytes(digest, "little")
    return SplitMix64((seed & MASK64) ^ salt).next_u64()


def numpy_generator(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, stream))
