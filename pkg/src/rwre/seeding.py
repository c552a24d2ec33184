"""Deterministic stream derivation from a master seed.

Every random stream is addressed by a key such as ``(purpose, replica,
n_index, chunk)``; the key is used as a ``SeedSequence`` spawn key so
distinct keys never share a stream, whatever the execution order.
"""

from __future__ import annotations

import numpy as np

# purpose tags
ENV = 1
WALK = 2
FRESH = 3
QBLOCKS = 4
PAD = 5


def seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))


def generator(seed: int, *key: int) -> np.random.Generator:
    """PCG64 generator for the stream ``key`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *key)))


def derive_seed(seed: int, *key: int) -> int:
    """64-bit seed for the stream ``key``, usable as a new master seed."""
    return int(seed_sequence(seed, *key).generate_state(1, dtype=np.uint64)[0])
