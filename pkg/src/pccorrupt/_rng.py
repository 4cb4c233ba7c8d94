"""Deterministic RNG stream derivation.

Every randomized operation in the toolkit draws from a numpy Generator whose
seed is derived by folding a tuple of 64-bit keys (global seed, corruption
ordinal, severity, sample hash) through SplitMix64.  Streams for distinct key
tuples are statistically independent, so samples can be generated in parallel
in any order without changing a single output byte.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a SplitMix64 state; return (new state, 64-bit output)."""
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def mix_keys(*keys: int) -> int:
    """Fold integer keys into one 64-bit seed via SplitMix64.

    Order-sensitive: mix_keys(a, b) != mix_keys(b, a) in general.
    """
    state = 0
    for key in keys:
        state ^= int(key) & _MASK
        _, state = splitmix64(state)
    return state


def hash_sample_id(sample_id: str) -> int:
    """Stable 64-bit key for a sample identifier string."""
    digest = hashlib.sha256(sample_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(*keys: int) -> np.random.Generator:
    """Independent numpy Generator for the given key tuple."""
    return np.random.Generator(np.random.PCG64(mix_keys(*keys)))
