"""Exact optimum: max-flow reduction and an exhaustive enumerator for tiny instances.

The fractional optimum of an allocation instance equals the integral one
(the constraint matrix is that of a bipartite degree-constrained subgraph,
hence totally unimodular), so both oracles also give the fractional OPT.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
from networkx.algorithms.flow import dinitz

from .graph import AllocationError, AllocationInstance, IntegralAllocation

__all__ = ["OracleResult", "TooLarge", "opt_flow", "opt_brute", "BRUTE_MAX_EDGES"]

BRUTE_MAX_EDGES = 24


class TooLarge(AllocationError):
    """Instance is beyond the exhaustive enumerator's range."""


@dataclass(frozen=True)
class OracleResult:
    opt_size: int
    witness: IntegralAllocation


def opt_flow(instance: AllocationInstance) -> OracleResult:
    """Maximum allocation via Dinitz blocking flow.

    Arcs: source -> u (cap 1), u -> v (cap 1), v -> sink (cap C_v).
    """
    if instance.m == 0:
        return OracleResult(0, IntegralAllocation())
    g = nx.DiGraph()
    src, sink = ("s",), ("t",)
    for u in instance.left_vertices:
        if instance.left_edges[u]:
            g.add_edge(src, u, capacity=1)
    for j, c in enumerate(instance.capacities):
        if instance.right_edges[j]:
            g.add_edge(instance.left_count + j, sink, capacity=c)
    for u, v in instance.edges:
        g.add_edge(u, v, capacity=1)
    value, flow = nx.maximum_flow(g, src, sink, flow_func=dinitz)
    chosen = [i for i, (u, v) in enumerate(instance.edges) if flow[u][v] > 0]
    return OracleResult(int(value), IntegralAllocation.of(chosen))


def opt_brute(instance: AllocationInstance) -> int:
    """Largest feasible edge subset by exhaustive search.

    Walks the include/exclude tree over edges, skipping only branches that are
    already infeasible or cannot beat the best size found; every feasible
    subset is therefore covered.
    """
    m = instance.m
    if m > BRUTE_MAX_EDGES:
        raise TooLarge(f"opt_brute supports m <= {BRUTE_MAX_EDGES}, got {m}")
    edges = instance.edges
    left_used = [False] * instance.left_count
    load = [0] * instance.right_count
    caps = instance.capacities
    off = instance.left_count
    best = 0

    def search(i: int, size: int) -> None:
        nonlocal best
        if size > best:
            best = size
        if i == m or size + (m - i) <= best:
            return
        u, v = edges[i]
        j = v - off
        if not left_used[u] and load[j] < caps[j]:
            left_used[u] = True
            load[j] += 1
            search(i + 1, size + 1)
            left_used[u] = False
            load[j] -= 1
        search(i + 1, size)

    search(0, 0)
    return best
