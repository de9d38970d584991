"""Bipartite allocation instances, allocations, validators and the text format.

Vertex ids are dense integers: ``0 .. left_count-1`` are the left side L
(capacity 1 each) and ``left_count .. n-1`` are the right side R with
per-vertex capacities. Edges are kept sorted by ``(u, v)`` and an edge index
always refers to that canonical order.
"""

from __future__ import annotations

import io
import os
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import networkx as nx
import numpy as np

__all__ = [
    "FEASIBILITY_SLACK",
    "AllocationError",
    "MalformedInstance",
    "InvalidConfig",
    "AllocationInstance",
    "IntegralAllocation",
    "FractionalAllocation",
    "build_instance",
    "degeneracy",
    "validate_integral",
    "validate_fractional",
    "read_instance",
    "write_instance",
    "format_instance",
    "parse_instance",
]

FEASIBILITY_SLACK = 1e-9


class AllocationError(Exception):
    """Base class for errors raised by this package."""


class MalformedInstance(AllocationError, ValueError):
    """Instance data violates the structural invariants."""


class InvalidConfig(AllocationError, ValueError):
    """Algorithm parameters are out of range."""


@dataclass(frozen=True, eq=False)
class AllocationInstance:
    left_count: int
    right_count: int
    edges: tuple[tuple[int, int], ...]
    capacities: tuple[int, ...]
    arboricity_hint: int | None = None

    @property
    def n(self) -> int:
        return self.left_count + self.right_count

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def left_vertices(self) -> range:
        return range(self.left_count)

    @property
    def right_vertices(self) -> range:
        return range(self.left_count, self.n)

    def capacity(self, v: int) -> int:
        """Capacity of any vertex; left vertices have capacity 1."""
        if v < self.left_count:
            return 1
        return self.capacities[v - self.left_count]

    @cached_property
    def edge_left(self) -> np.ndarray:
        """Left endpoint per edge."""
        return np.fromiter((u for u, _ in self.edges), dtype=np.int64, count=self.m)

    @cached_property
    def edge_right(self) -> np.ndarray:
        """Right endpoint per edge as an offset into R (``v - left_count``)."""
        return np.fromiter(
            (v - self.left_count for _, v in self.edges), dtype=np.int64, count=self.m
        )

    @cached_property
    def capacity_array(self) -> np.ndarray:
        return np.asarray(self.capacities, dtype=np.float64)

    @cached_property
    def left_edges(self) -> tuple[tuple[int, ...], ...]:
        """Incident edge indices of every left vertex, ascending."""
        out: list[list[int]] = [[] for _ in range(self.left_count)]
        for i, (u, _) in enumerate(self.edges):
            out[u].append(i)
        return tuple(tuple(x) for x in out)

    @cached_property
    def right_edges(self) -> tuple[tuple[int, ...], ...]:
        """Incident edge indices of every right vertex (by R offset), ascending."""
        out: list[list[int]] = [[] for _ in range(self.right_count)]
        for i, (_, v) in enumerate(self.edges):
            out[v - self.left_count].append(i)
        return tuple(tuple(x) for x in out)

    @cached_property
    def left_degree(self) -> np.ndarray:
        return np.bincount(self.edge_left, minlength=self.left_count)

    @cached_property
    def right_degree(self) -> np.ndarray:
        return np.bincount(self.edge_right, minlength=self.right_count)

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {e: i for i, e in enumerate(self.edges)}

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AllocationInstance):
            return NotImplemented
        return (
            self.left_count == other.left_count
            and self.right_count == other.right_count
            and self.edges == other.edges
            and self.capacities == other.capacities
        )

    def __hash__(self) -> int:
        return hash((self.left_count, self.right_count, self.edges, self.capacities))


@dataclass(frozen=True)
class IntegralAllocation:
    edge_subset: frozenset[int] = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.edge_subset)

    @classmethod
    def of(cls, edges: Iterable[int]) -> IntegralAllocation:
        return cls(frozenset(int(e) for e in edges))


@dataclass(frozen=True, eq=False)
class FractionalAllocation:
    """Per-edge values in edge-index order, with the cached total weight."""

    values: np.ndarray
    weight: float

    @classmethod
    def from_values(cls, values: Sequence[float] | np.ndarray) -> FractionalAllocation:
        arr = np.array(values, dtype=np.float64)
        arr.setflags(write=False)
        return cls(arr, float(np.sum(arr)))

    @classmethod
    def zeros(cls, m: int) -> FractionalAllocation:
        return cls.from_values(np.zeros(m))


def build_instance(
    left_count: int,
    right_count: int,
    edges: Iterable[tuple[int, int]],
    capacities: Sequence[int],
    arboricity_hint: int | None = None,
) -> AllocationInstance:
    """Validate raw data and return an instance with canonically sorted edges.

    Right vertices are addressed by global id (``left_count + j``).
    """
    if left_count < 0 or right_count < 0:
        raise MalformedInstance("vertex counts must be non-negative")
    caps = tuple(int(c) for c in capacities)
    if len(caps) != right_count:
        raise MalformedInstance(
            f"expected {right_count} capacities, got {len(caps)}"
        )
    for j, c in enumerate(caps):
        if c < 1:
            raise MalformedInstance(f"capacity of vertex {left_count + j} is {c} < 1")
    n = left_count + right_count
    seen: set[tuple[int, int]] = set()
    for u, v in edges:
        u, v = int(u), int(v)
        if not 0 <= u < left_count:
            raise MalformedInstance(f"edge ({u}, {v}): left endpoint out of range")
        if not left_count <= v < n:
            raise MalformedInstance(f"edge ({u}, {v}): right endpoint out of range")
        if (u, v) in seen:
            raise MalformedInstance(f"duplicate edge ({u}, {v})")
        seen.add((u, v))
    if arboricity_hint is not None and arboricity_hint < 1:
        raise MalformedInstance("arboricity hint must be positive")
    return AllocationInstance(
        left_count, right_count, tuple(sorted(seen)), caps, arboricity_hint
    )


def degeneracy(instance: AllocationInstance) -> int:
    """Degeneracy by minimum-degree peeling; sandwiches arboricity in [d/2, d]."""
    if instance.m == 0:
        return 0
    return max(nx.core_number(instance.to_networkx()).values())


def validate_integral(instance: AllocationInstance, alloc: IntegralAllocation) -> bool:
    used_left: set[int] = set()
    load: dict[int, int] = {}
    for e in alloc.edge_subset:
        if not 0 <= e < instance.m:
            return False
        u, v = instance.edges[e]
        if u in used_left:
            return False
        used_left.add(u)
        load[v] = load.get(v, 0) + 1
        if load[v] > instance.capacity(v):
            return False
    return True


def validate_fractional(
    instance: AllocationInstance, frac: FractionalAllocation
) -> tuple[bool, float]:
    """Check the box, left-sum and capacity constraints; return (ok, weight)."""
    x = np.asarray(frac.values, dtype=np.float64)
    if x.shape != (instance.m,):
        return False, float("nan")
    weight = float(np.sum(x))
    if instance.m == 0:
        return True, weight
    if not np.all(np.isfinite(x)):
        return False, weight
    if np.any(x < 0.0) or np.any(x > 1.0 + FEASIBILITY_SLACK):
        return False, weight
    left_sum = np.bincount(instance.edge_left, weights=x, minlength=instance.left_count)
    if np.any(left_sum > 1.0 + FEASIBILITY_SLACK):
        return False, weight
    right_sum = np.bincount(
        instance.edge_right, weights=x, minlength=instance.right_count
    )
    if np.any(right_sum > instance.capacity_array * (1.0 + FEASIBILITY_SLACK)):
        return False, weight
    if abs(weight - frac.weight) > FEASIBILITY_SLACK * max(1.0, abs(weight)):
        return False, weight
    return True, weight


# -- text format -----------------------------------------------------------


def format_instance(instance: AllocationInstance) -> str:
    out = io.StringIO()
    out.write(f"alloc {instance.left_count} {instance.right_count} {instance.m}\n")
    for j, c in enumerate(instance.capacities):
        out.write(f"cap {instance.left_count + j} {c}\n")
    for u, v in instance.edges:
        out.write(f"edge {u} {v}\n")
    return out.getvalue()


def parse_instance(text: str) -> AllocationInstance:
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line.split())
    if not lines:
        raise MalformedInstance("empty instance file")
    head = lines[0]
    if len(head) != 4 or head[0] != "alloc":
        raise MalformedInstance(f"bad header: {' '.join(head)!r}")
    try:
        n_left, n_right, m = (int(t) for t in head[1:])
    except ValueError as exc:
        raise MalformedInstance(f"bad header: {' '.join(head)!r}") from exc
    if len(lines) != 1 + n_right + m:
        raise MalformedInstance(
            f"expected {n_right} cap lines and {m} edge lines, got {len(lines) - 1} lines"
        )
    caps: list[int] = []
    for j, toks in enumerate(lines[1 : 1 + n_right]):
        if len(toks) != 3 or toks[0] != "cap":
            raise MalformedInstance(f"bad cap line: {' '.join(toks)!r}")
        v, c = _ints(toks[1:])
        if v != n_left + j:
            raise MalformedInstance(f"cap lines must list R in order, got vertex {v}")
        caps.append(c)
    edges: list[tuple[int, int]] = []
    for toks in lines[1 + n_right :]:
        if len(toks) != 3 or toks[0] != "edge":
            raise MalformedInstance(f"bad edge line: {' '.join(toks)!r}")
        u, v = _ints(toks[1:])
        edges.append((u, v))
    return build_instance(n_left, n_right, edges, caps)


def _ints(tokens: Sequence[str]) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in tokens)
    except ValueError as exc:
        raise MalformedInstance(f"non-integer field in {tokens!r}") from exc


def read_instance(path: str | os.PathLike[str]) -> AllocationInstance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read())


def write_instance(instance: AllocationInstance, path: str | os.PathLike[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_instance(instance))
