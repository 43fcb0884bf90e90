"""Seed derivation for reproducible substreams.

All randomness in the package flows through numpy's PCG64, seeded with keys
derived by splitmix64 from a single base seed plus integer stream indices.
Both algorithms are published and platform-independent, so a (seed, index)
pair pins the exact sample sequence everywhere.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> int:
    """One splitmix64 output for the given state (Steele et al.)."""
    z = (state + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def mix(base_seed: int, *indices: int) -> int:
    """Fold stream indices into a base seed, one splitmix64 step per index."""
    key = splitmix64(base_seed & _MASK64)
    for ix in indices:
        key = splitmix64((key ^ (ix & _MASK64)) & _MASK64)
    return key


def generator(base_seed: int, *indices: int) -> np.random.Generator:
    """PCG64 generator on the substream identified by (base_seed, indices)."""
    return np.random.Generator(np.random.PCG64(mix(base_seed, *indices)))
