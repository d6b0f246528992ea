"""Deterministic RNG stream derivation.

Every random draw in a pipeline comes from a generator derived from the plan
seed plus a structured path (member index, stream tag, attempt). Derivation
goes through numpy's SeedSequence, so streams are independent and the whole
pipeline is reproducible from a single integer.
"""

from __future__ import annotations

import numpy as np

# Stream tags: fixed small ints so derivations stay stable across releases.
STREAM_SUBSAMPLE = 1
STREAM_MECHANISM = 2
STREAM_MODEL = 3
STREAM_RESAMPLE = 4
STREAM_SPLIT = 5
STREAM_BENCH = 6


def child_rng(seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream identified by (seed, *path)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, *path))))


def child_seed(seed: int, *path: int) -> int:
    """Derive a plain integer seed (for nesting plans inside benchmarks)."""
    return int(np.random.SeedSequence((seed, *path)).generate_state(1, dtype=np.uint64)[0])
