"""Seed streams: independent, reproducible randomness per unit of work."""

from __future__ import annotations

import numpy as np

_PHASES = {
    "partition": 1,
    "select": 2,
    "shadow": 3,
    "test": 4,
    "labels": 5,
    "queries": 6,
    "forest": 7,
    "attention": 8,
    "fit": 9,
    "generate": 10,
}


def seed_stream(master: int, *keys) -> np.random.SeedSequence:
    """Seed for a key such as ``(target id, phase tag, world index)`` under a master seed."""
    spawn = tuple(_PHASES[k] if isinstance(k, str) else int(k) for k in keys)
    return np.random.SeedSequence(entropy=int(master), spawn_key=spawn)


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)
