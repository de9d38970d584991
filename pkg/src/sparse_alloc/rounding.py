"""Randomized rounding of a fractional allocation to an integral one."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import AllocationInstance, FractionalAllocation, IntegralAllocation
from .rng import stream

__all__ = ["RoundingReport", "round_once", "round_best_of", "default_copies", "SAMPLE_DIVISOR"]

SAMPLE_DIVISOR = 6.0


@dataclass(frozen=True)
class RoundingReport:
    kept_edges: IntegralAllocation
    sampled_count: int
    dropped_heavy_count: int
    weight_fraction_input: float


def default_copies(n: int) -> int:
    return math.ceil(math.log2(max(n, 2))) + 1


def round_once(
    instance: AllocationInstance, frac: FractionalAllocation, rng: np.random.Generator
) -> RoundingReport:
    """Sample each edge with probability ``x_e / 6``, then drop edges at heavy vertices.

    A vertex is heavy when more sampled edges touch it than its capacity
    (1 for left vertices); all sampled edges at a heavy vertex are dropped.
    """
    m = instance.m
    x = np.clip(np.asarray(frac.values, dtype=np.float64), 0.0, 1.0)
    if m == 0:
        return RoundingReport(IntegralAllocation(), 0, 0, frac.weight)
    sampled = rng.random(m) < x / SAMPLE_DIVISOR
    eu, ev = instance.edge_left, instance.edge_right
    left_load = np.bincount(eu[sampled], minlength=instance.left_count)
    right_load = np.bincount(ev[sampled], minlength=instance.right_count)
    heavy_left = left_load > 1
    heavy_right = right_load > np.asarray(instance.capacities)
    keep = sampled & ~heavy_left[eu] & ~heavy_right[ev]
    n_sampled = int(np.sum(sampled))
    kept = np.flatnonzero(keep)
    return RoundingReport(
        IntegralAllocation.of(kept.tolist()),
        n_sampled,
        n_sampled - len(kept),
        frac.weight,
    )


def round_best_of(
    instance: AllocationInstance,
    frac: FractionalAllocation,
    copies: int | None = None,
    seed: int = 0,
) -> IntegralAllocation:
    """Largest of ``copies`` independent roundings; copy ``i`` uses ``stream(seed, i)``."""
    if copies is None:
        copies = default_copies(instance.n)
    if copies < 1:
        raise ValueError("copies must be >= 1")
    best = IntegralAllocation()
    for i in range(copies):
        got = round_once(instance, frac, stream(seed, i)).kept_edges
        if i == 0 or len(got) > len(best):
            best = got
    return best
