"""Deterministic seed derivation for independent RNG streams.

A single experiment seed fans out to per-component seeds through a
splitmix64-style mix, so adding a new consumer never shifts the streams
of existing ones.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z = (z + _GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fnv1a(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def derive_seed(base: int, *keys: int | str) -> int:
    """Derive a 64-bit seed from a base seed and a path of keys.

    Keys may be ints or strings; distinct paths give independent seeds.
    """
    state = int(base) & _MASK64
    for key in keys:
        token = _fnv1a(key.encode("utf-8")) if isinstance(key, str) else int(key) & _MASK64
        state = _mix64(state ^ token)
    return state


def rng_for(base: int, *keys: int | str) -> np.random.Generator:
    """Generator seeded from the derived path seed."""
    return np.random.default_rng(derive_seed(base, *keys))
