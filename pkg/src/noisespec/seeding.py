"""Deterministic seed derivation for parallel-safe random streams.

Every stochastic component draws from a stream derived from the master seed
by the same documented rule: the master seed is XOR-ed with a splitmix64
hash of each sub-index in turn.  Streams for distinct indices are
statistically independent, and the derivation is associative-free (order of
indices matters), so parallel and serial execution see identical draws.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 scrambling round (public-domain constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def derive_seed(master: int, *indices: int) -> int:
    """Derive a stream seed: master XOR splitmix64(index), chained per index."""
    seed = master & _MASK64
    for ix in indices:
        seed ^= splitmix64(ix & _MASK64)
        seed = splitmix64(seed)
    return seed


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a derived seed."""
    return np.random.Generator(np.random.PCG64(seed & _MASK64))
