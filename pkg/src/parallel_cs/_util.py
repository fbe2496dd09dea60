"""Seeding helpers shared by the random constructions."""

from __future__ import annotations

import numpy as np


def seed_sequence(seed, *keys: int) -> np.random.SeedSequence:
    """Counter-based substream of ``seed`` addressed by integer ``keys``.

    The same (seed, keys) always yields the same stream, independent of the
    order in which substreams are requested.
    """
    if isinstance(seed, np.random.SeedSequence):
        base = seed
        return np.random.SeedSequence(
            base.entropy, spawn_key=tuple(base.spawn_key) + tuple(int(k) for k in keys)
        )
    return np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))


def make_rng(seed, *keys: int) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        if keys:
            raise TypeError("substream keys need an integer seed or SeedSequence")
        return seed
    return np.random.default_rng(seed_sequence(seed, *keys))
