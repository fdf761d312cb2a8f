"""Seed handling.

Independent streams are derived from a root seed with numpy's
``SeedSequence`` spawn keys, so a stream depends only on
``(root_seed, *keys)`` and never on execution order.
"""

from __future__ import annotations

import numpy as np


def derive_rng(root_seed: int, *keys: int) -> np.random.Generator:
    """Generator for the stream identified by ``keys`` under ``root_seed``."""
    seq = np.random.SeedSequence(int(root_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(seq)


def derive_seed(root_seed: int, *keys: int) -> int:
    seq = np.random.SeedSequence(int(root_seed), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
