"""Improving an integral allocation with short augmenting walks on a layered graph.

Every vertex is split into ``b(v)`` copies (1 on the left, ``C_v`` on the
right) so that the current allocation becomes a matching ``W`` on copies.
A layered graph ``L_0 .. L_{k+1}`` then places free left copies in ``L_0``,
free right copies in ``L_{k+1}`` and each matched copy pair as an arc
(right tail, left head) in a random middle layer. Unmatched edges are
offered between the heads of layer ``i`` and the tails of layer ``i+1`` for
a random ``i``. A constant-approximate allocation between each pair of
adjacent layers yields walks from ``L_0`` to ``L_{k+1}``; flipping those
walks grows the allocation by one edge each.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .graph import (
    AllocationInstance,
    IntegralAllocation,
    InvalidConfig,
    build_instance,
    validate_integral,
)
from .local import round_bound, run_until_terminated
from .rng import stream
from .rounding import round_best_of

__all__ = [
    "Copy",
    "SplitGraph",
    "LayeredGraph",
    "BoostStats",
    "split_to_matching_graph",
    "build_layered",
    "layered_from_choices",
    "find_walks",
    "apply_walks",
    "greedy_complete",
    "default_solver",
    "boost",
]

Copy = tuple[int, int]
"""(original vertex, copy index)"""

Solver = Callable[[AllocationInstance, int], IntegralAllocation]


@dataclass
class SplitGraph:
    copies: dict[int, list[Copy]]
    matched_edges: list[tuple[Copy, Copy, int]]
    """(right copy, left copy, edge index) for every allocated edge."""
    free_copies: list[Copy]


@dataclass
class LayeredGraph:
    k: int
    layers: list[set[Copy]]
    arcs: list[list[tuple[Copy, Copy, int]]]
    """Per layer; ``arcs[i]`` holds (tail, head, edge) with tail on the right."""
    heads: list[dict[int, list[Copy]]]
    tails: list[dict[int, list[Copy]]]
    cross_edges: list[list[int]]
    """``cross_edges[i]`` are realized unmatched edges from ``H_i`` to ``T_{i+1}``."""
    head_of: dict[int, Copy] = field(default_factory=dict)
    arc_of: dict[Copy, tuple[Copy, int]] = field(default_factory=dict)
    """tail copy -> (head copy, matched edge)"""

    def contracted_caps(self, i: int) -> tuple[dict[int, int], dict[int, int]]:
        """``b'`` of the contracted heads of layer ``i`` and tails of layer ``i``."""
        return (
            {v: len(c) for v, c in self.heads[i].items()},
            {v: len(c) for v, c in self.tails[i].items()},
        )


class BoostStats(NamedTuple):
    iter: int
    matching_size: int
    walks_applied: int


def split_to_matching_graph(
    instance: AllocationInstance, alloc: IntegralAllocation
) -> SplitGraph:
    """Copies per vertex; every allocated edge takes the lowest free copy at each end."""
    copies: dict[int, list[Copy]] = {u: [(u, 0)] for u in instance.left_vertices}
    for v in instance.right_vertices:
        copies[v] = [(v, i) for i in range(instance.capacity(v))]
    used: set[Copy] = set()
    matched: list[tuple[Copy, Copy, int]] = []
    for e in sorted(alloc.edge_subset):
        u, v = instance.edges[e]
        cu = next((c for c in copies[u] if c not in used), None)
        cv = next((c for c in copies[v] if c not in used), None)
        if cu is None or cv is None:
            raise InvalidConfig("allocation is infeasible; cannot split it into a matching")
        used.add(cu)
        used.add(cv)
        matched.append((cv, cu, e))
    free = [c for w in range(instance.n) for c in copies[w] if c not in used]
    return SplitGraph(copies, matched, free)


def layered_from_choices(
    split: SplitGraph,
    instance: AllocationInstance,
    k: int,
    arc_layer: Sequence[int],
    cross_layer: Sequence[int],
) -> LayeredGraph:
    """Layered graph for explicit random choices.

    ``arc_layer[j]`` in ``1..k`` is the layer of ``split.matched_edges[j]``;
    ``cross_layer[e]`` in ``0..k`` is ``i_e`` for edge ``e`` (ignored for
    allocated edges).
    """
    if k < 0:
        raise InvalidConfig("k must be >= 0")
    layers: list[set[Copy]] = [set() for _ in range(k + 2)]
    heads: list[dict[int, list[Copy]]] = [{} for _ in range(k + 2)]
    tails: list[dict[int, list[Copy]]] = [{} for _ in range(k + 2)]
    arcs: list[list[tuple[Copy, Copy, int]]] = [[] for _ in range(k + 2)]
    off = instance.left_count
    for c in split.free_copies:
        if c[0] < off:
            layers[0].add(c)
            heads[0].setdefault(c[0], []).append(c)
        else:
            layers[k + 1].add(c)
            tails[k + 1].setdefault(c[0], []).append(c)
    lg = LayeredGraph(k, layers, arcs, heads, tails, [[] for _ in range(k + 1)])
    matched_ids = set()
    for (tail, head, e), i in zip(split.matched_edges, arc_layer):
        if not 1 <= i <= k:
            raise InvalidConfig(f"arc layer {i} outside 1..{k}")
        matched_ids.add(e)
        layers[i].update((tail, head))
        arcs[i].append((tail, head, e))
        heads[i].setdefault(head[0], []).append(head)
        tails[i].setdefault(tail[0], []).append(tail)
        lg.arc_of[tail] = (head, e)
    for e, (u, v) in enumerate(instance.edges):
        if e in matched_ids:
            continue
        i = int(cross_layer[e])
        if u in heads[i] and v in tails[i + 1]:
            lg.cross_edges[i].append(e)
    return lg


def build_layered(
    split: SplitGraph,
    instance: AllocationInstance,
    k: int,
    rng: np.random.Generator,
) -> LayeredGraph:
    """Random layered graph with ``k`` middle layers (allocation orientation)."""
    arc_layer = rng.integers(1, k + 1, size=len(split.matched_edges)) if k >= 1 else []
    if k < 1 and split.matched_edges:
        # with no middle layer, matched edges have nowhere to go
        return _no_middle(split, instance, rng)
    cross = rng.integers(0, k + 1, size=instance.m)
    return layered_from_choices(split, instance, k, list(arc_layer), cross.tolist())


def _no_middle(
    split: SplitGraph, instance: AllocationInstance, rng: np.random.Generator
) -> LayeredGraph:
    """``k = 0``: only free copies take part; edges run straight from ``L_0`` to ``L_1``."""
    bare = SplitGraph(split.copies, [], split.free_copies)
    lg = layered_from_choices(bare, instance, 0, [], [0] * instance.m)
    matched = {e for _, _, e in split.matched_edges}
    lg.cross_edges[0] = [e for e in lg.cross_edges[0] if e not in matched]
    return lg


def _layer_instance(
    lg: LayeredGraph, instance: AllocationInstance, i: int
) -> tuple[AllocationInstance, list[int]]:
    """Allocation instance between ``H_i`` and ``T_{i+1}`` with contracted capacities."""
    edges = lg.cross_edges[i]
    lefts = sorted({instance.edges[e][0] for e in edges})
    rights = sorted({instance.edges[e][1] for e in edges})
    lid = {u: j for j, u in enumerate(lefts)}
    rid = {v: len(lefts) + j for j, v in enumerate(rights)}
    caps = [len(lg.tails[i + 1][v]) for v in rights]
    local = [(lid[instance.edges[e][0]], rid[instance.edges[e][1]]) for e in edges]
    sub = build_instance(len(lefts), len(rights), local, caps)
    back = {pair: e for pair, e in zip(local, edges)}
    return sub, [back[p] for p in sub.edges]


def find_walks(
    lg: LayeredGraph,
    instance: AllocationInstance,
    solver: Solver,
    seed: int,
) -> list[tuple[list[int], list[int]]]:
    """Stitch per-layer allocations into complete ``L_0 -> L_{k+1}`` walks.

    Returns ``(added, removed)`` edge lists per walk. Layer ``i`` is solved
    with seed ``stream(seed, i)`` only when some walk is still alive there.
    """
    k = lg.k
    alive: list[tuple[int, list[int], list[int]]] = []  # (tail vertex, added, removed)
    for i in range(k + 1):
        if i == 0:
            chosen = _solve_layer(lg, instance, solver, seed, 0)
            alive = [(instance.edges[e][1], [e], []) for e in sorted(chosen.values())]
            continue
        if not alive:
            return []
        chosen = _solve_layer(lg, instance, solver, seed, i)
        spare = {v: list(c) for v, c in lg.tails[i].items()}
        nxt = []
        for v, added, removed in alive:
            tail = spare[v].pop(0)
            head, arc_edge = lg.arc_of[tail]
            out = chosen.get(head[0])
            if out is None:
                continue
            nxt.append((instance.edges[out][1], added + [out], removed + [arc_edge]))
        alive = nxt
    free = {v: len(c) for v, c in lg.tails[k + 1].items()}
    walks = []
    for v, added, removed in alive:
        if free.get(v, 0) > 0:
            free[v] -= 1
            walks.append((added, removed))
    return walks


def _solve_layer(
    lg: LayeredGraph, instance: AllocationInstance, solver: Solver, seed: int, i: int
) -> dict[int, int]:
    """Left vertex -> chosen cross edge in the layer-``i`` allocation."""
    if not lg.cross_edges[i]:
        return {}
    sub, back = _layer_instance(lg, instance, i)
    got = solver(sub, int(stream(seed, i).integers(1 << 62)))
    if not validate_integral(sub, got):
        raise AssertionError("approximate solver returned an infeasible allocation")
    return {instance.edges[back[e]][0]: back[e] for e in got.edge_subset}


def apply_walks(
    instance: AllocationInstance,
    alloc: IntegralAllocation,
    walks: list[tuple[list[int], list[int]]],
) -> tuple[IntegralAllocation, int]:
    """Flip every walk that keeps the allocation feasible; returns (result, flips)."""
    current = set(alloc.edge_subset)
    applied = 0
    for added, removed in walks:
        trial = (current - set(removed)) | set(added)
        if len(trial) == len(current) + 1 and validate_integral(
            instance, IntegralAllocation(frozenset(trial))
        ):
            current = trial
            applied += 1
    return IntegralAllocation(frozenset(current)), applied


def greedy_complete(
    instance: AllocationInstance, alloc: IntegralAllocation
) -> IntegralAllocation:
    """Add edges in index order while both endpoints have room."""
    left_used = [False] * instance.left_count
    load = [0] * instance.right_count
    off = instance.left_count
    for e in alloc.edge_subset:
        u, v = instance.edges[e]
        left_used[u] = True
        load[v - off] += 1
    chosen = set(alloc.edge_subset)
    for e, (u, v) in enumerate(instance.edges):
        j = v - off
        if not left_used[u] and load[j] < instance.capacities[j]:
            left_used[u] = True
            load[j] += 1
            chosen.add(e)
    return IntegralAllocation(frozenset(chosen))


def default_solver(instance: AllocationInstance, seed: int) -> IntegralAllocation:
    """Proportional iteration with self-termination, best-of rounding, greedy completion."""
    if instance.m == 0:
        return IntegralAllocation()
    eps = 0.1
    res = run_until_terminated(instance, eps, round_bound(max(instance.n, 1), eps))
    rounded = round_best_of(instance, res.allocation, seed=seed)
    return greedy_complete(instance, rounded)


def _may_augment(instance: AllocationInstance, alloc: IntegralAllocation) -> bool:
    """False when no free left vertex has an edge or no right vertex has room."""
    left_used = np.zeros(instance.left_count, dtype=bool)
    load = np.zeros(instance.right_count, dtype=np.int64)
    for e in alloc.edge_subset:
        u, v = instance.edges[e]
        left_used[u] = True
        load[v - instance.left_count] += 1
    free_left = (~left_used) & (instance.left_degree > 0)
    room = load < np.asarray(instance.capacities)
    return bool(np.any(free_left)) and bool(np.any(room & (instance.right_degree > 0)))


def boost(
    instance: AllocationInstance,
    epsilon: float,
    approx_solver: Solver | None = None,
    seed: int = 0,
    max_iterations: int | None = None,
    *,
    initial: IntegralAllocation | None = None,
    stagnation_window: int = 50,
    trace: list[BoostStats] | None = None,
) -> IntegralAllocation:
    """Grow an allocation with augmenting walks of up to ``k = ceil(2/eps)`` matched arcs.

    One iteration sweeps the number of middle layers through ``0..k``; each
    sweep step rebuilds the layered graph on the current allocation and
    flips every complete walk found. Stops after ``max_iterations`` sweeps
    (default ``min(k^k, 10^4)``) or ``stagnation_window`` sweeps without growth.
    """
    if not 0.0 < epsilon <= 1.0:
        raise InvalidConfig(f"epsilon must lie in (0, 1], got {epsilon}")
    solver = approx_solver or default_solver
    k = math.ceil(2.0 / epsilon)
    if max_iterations is None:
        max_iterations = min(k**k, 10_000)
    current = initial if initial is not None else solver(instance, int(stream(seed, 0).integers(1 << 62)))
    if not validate_integral(instance, current):
        raise InvalidConfig("starting allocation is infeasible")
    best, stale = len(current), 0
    for it in range(1, max_iterations + 1):
        applied = 0
        for ell in range(k + 1):
            if not _may_augment(instance, current):
                break
            split = split_to_matching_graph(instance, current)
            lg = build_layered(split, instance, ell, stream(seed, 1, it, ell))
            walks = find_walks(lg, instance, solver, int(stream(seed, 2, it, ell).integers(1 << 62)))
            current, got = apply_walks(instance, current, walks)
            applied += got
        if trace is not None:
            trace.append(BoostStats(it, len(current), applied))
        if len(current) > best:
            best, stale = len(current), 0
        else:
            stale += 1
        if stale >= stagnation_window or not _may_augment(instance, current):
            break
    return current
