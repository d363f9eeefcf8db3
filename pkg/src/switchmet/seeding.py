"""Deterministic seed derivation.

A master seed is mixed with a tuple of keys (mode name, N, trial index, ...)
through the SplitMix64 finaliser, one key at a time:

    state <- splitmix64(state XOR key_j)

String keys are first reduced to 64 bits with the leading 8 bytes of their
SHA-256 digest (little endian). The derived 64-bit value seeds a PCG64
generator, so every (mode, N, trial) gets its own stream regardless of the
order or thread in which trials execute.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def _key_bits(key) -> int:
    if isinstance(key, str):
        return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")
    if isinstance(key, (int, np.integer)) and not isinstance(key, bool):
        return int(key) & MASK64
    raise TypeError(f"seed keys must be str or int, got {type(key).__name__}")


def derive_seed(master: int, *keys) -> int:
    state = int(master) & MASK64
    for key in keys:
        state = splitmix64(state ^ _key_bits(key))
    return state


def derive_rng(master: int, *keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, *keys)))
