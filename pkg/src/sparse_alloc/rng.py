"""Reproducible random streams.

Every random decision in the package draws from a Philox4x64 counter-based
generator keyed by a tuple of non-negative integers, e.g.
``stream(seed, phase, offset, vertex)``. The key is hashed by numpy's
``SeedSequence`` so independent keys give statistically independent streams
and any component can be regenerated without replaying the others.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "MASK64"]

MASK64 = (1 << 64) - 1


def stream(seed: int, *keys: int) -> np.random.Generator:
    entropy = [int(seed) & MASK64, *(_key(k) for k in keys)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _key(k: int) -> int:
    k = int(k)
    if k < 0:
        # keep negative keys distinct from their absolute values
        return (1 << 63) | (-k & ((1 << 63) - 1))
    return k & MASK64
