"""Seeded, splittable random streams for parallel replication.

Stream-splitting rule: replicate ``i`` of a run with master seed ``s`` draws
from ``Generator(PCG64(SeedSequence(s, spawn_key=(0, i))))``; quantities
shared across a whole run (for example a design held fixed over every
replicate) use ``spawn_key=(1,)``. Streams are pure functions of
(seed, index), so thread count and execution order never change results.
"""

from __future__ import annotations

import numpy as np

__all__ = ["replicate_rng", "shared_rng"]


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for replicate ``index`` of run ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0, index))))


def shared_rng(seed: int) -> np.random.Generator:
    """Generator for draws shared across all replicates of run ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1,))))
