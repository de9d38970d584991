"""Seeded instance generators with arboricity known by construction."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .graph import AllocationInstance, InvalidConfig, build_instance, degeneracy
from .rng import stream

__all__ = [
    "GenKind",
    "CapacityRule",
    "GenSpec",
    "InfeasibleSpec",
    "generate",
    "gen_forest_union",
    "gen_star",
    "gen_random_bipartite",
    "parse_gen_spec",
]


class GenKind(str, enum.Enum):
    FOREST_UNION = "forest_union"
    STAR = "star"
    RANDOM_BIPARTITE = "random_bipartite"


class CapacityRule(str, enum.Enum):
    ALL_ONE = "all_one"
    UNIFORM_RANDOM = "uniform_random"
    DEGREE_PROPORTIONAL = "degree_proportional"


class InfeasibleSpec(UserWarning):
    """The requested arboricity cannot be realized on this vertex count."""


@dataclass(frozen=True)
class GenSpec:
    kind: GenKind = GenKind.FOREST_UNION
    left_count: int = 10
    right_count: int = 10
    lam: int = 1
    edge_prob: float | None = None
    target_m: int | None = None
    capacity_rule: CapacityRule = CapacityRule.ALL_ONE
    capacity_max: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", GenKind(self.kind))
        object.__setattr__(self, "capacity_rule", CapacityRule(self.capacity_rule))
        if self.left_count < 0 or self.right_count < 0:
            raise InvalidConfig("vertex counts must be non-negative")
        if self.lam < 1:
            raise InvalidConfig("lambda must be >= 1")
        if self.edge_prob is not None and not 0.0 <= self.edge_prob <= 1.0:
            raise InvalidConfig("edge_prob must lie in [0, 1]")
        if self.target_m is not None and self.target_m < 0:
            raise InvalidConfig("target_m must be non-negative")
        if self.capacity_max < 1:
            raise InvalidConfig("capacity_max must be >= 1")


def generate(spec: GenSpec) -> AllocationInstance:
    if spec.kind is GenKind.FOREST_UNION:
        return gen_forest_union(spec)
    if spec.kind is GenKind.RANDOM_BIPARTITE:
        return gen_random_bipartite(spec)
    return gen_star(spec.left_count, spec.capacity_max)


def gen_forest_union(spec: GenSpec) -> AllocationInstance:
    """Union of ``spec.lam`` random bipartite spanning forests.

    Each forest visits all vertices in a fresh random order and attaches every
    vertex to a uniformly random earlier vertex of the opposite side, so each
    layer is acyclic and the union has arboricity at most ``lam``.
    """
    if spec.kind is not GenKind.FOREST_UNION:
        raise InvalidConfig(f"expected a forest_union spec, got {spec.kind.value}")
    nl, nr, lam = spec.left_count, spec.right_count, spec.lam
    if lam >= max(1, min(nl, nr)):
        warnings.warn(
            f"lambda={lam} >= min(nL, nR)={min(nl, nr)}: forests overlap heavily",
            InfeasibleSpec,
            stacklevel=2,
        )
    n = nl + nr
    edges: set[tuple[int, int]] = set()
    for layer in range(lam):
        rng = stream(spec.seed, 1, layer)
        order = rng.permutation(n)
        seen_left: list[int] = []
        seen_right: list[int] = []
        for w in order.tolist():
            if w < nl:
                if seen_right:
                    edges.add((w, seen_right[int(rng.integers(len(seen_right)))]))
                seen_left.append(w)
            else:
                if seen_left:
                    edges.add((seen_left[int(rng.integers(len(seen_left)))], w))
                seen_right.append(w)
    caps = _capacities(spec, nl, nr, edges)
    return build_instance(nl, nr, edges, caps, arboricity_hint=lam)


def gen_star(leaf_count: int, center_capacity: int) -> AllocationInstance:
    """Leaves ``0..leaf_count-1`` in L, a single center in R."""
    if leaf_count < 1 or center_capacity < 1:
        raise InvalidConfig("star needs leaf_count >= 1 and center_capacity >= 1")
    edges = [(u, leaf_count) for u in range(leaf_count)]
    return build_instance(leaf_count, 1, edges, [center_capacity], arboricity_hint=1)


def gen_random_bipartite(spec: GenSpec) -> AllocationInstance:
    if spec.kind is not GenKind.RANDOM_BIPARTITE:
        raise InvalidConfig(f"expected a random_bipartite spec, got {spec.kind.value}")
    nl, nr = spec.left_count, spec.right_count
    rng = stream(spec.seed, 2)
    total = nl * nr
    if spec.target_m is not None:
        if spec.target_m > total:
            raise InvalidConfig(f"target_m={spec.target_m} exceeds nL*nR={total}")
        picks = np.sort(rng.choice(total, size=spec.target_m, replace=False))
    else:
        p = 0.0 if spec.edge_prob is None else spec.edge_prob
        picks = np.flatnonzero(rng.random(total) < p)
    edges = {(int(k) // nr, nl + int(k) % nr) for k in picks} if nr else set()
    caps = _capacities(spec, nl, nr, edges)
    inst = build_instance(nl, nr, edges, caps)
    hint = max(1, degeneracy(inst))
    return build_instance(nl, nr, edges, caps, arboricity_hint=hint)


def _capacities(
    spec: GenSpec, nl: int, nr: int, edges: set[tuple[int, int]]
) -> list[int]:
    rule = spec.capacity_rule
    if rule is CapacityRule.ALL_ONE:
        return [1] * nr
    if rule is CapacityRule.UNIFORM_RANDOM:
        rng = stream(spec.seed, 3)
        return [int(c) for c in rng.integers(1, spec.capacity_max + 1, size=nr)]
    deg = [0] * nr
    for _, v in edges:
        deg[v - nl] += 1
    return [max(1, math.ceil(d / 2)) for d in deg]


_KEY_ALIASES = {
    "nl": "left_count",
    "nr": "right_count",
    "left": "left_count",
    "right": "right_count",
    "lambda": "lam",
    "lam": "lam",
    "p": "edge_prob",
    "edge_prob": "edge_prob",
    "m": "target_m",
    "target_m": "target_m",
    "cap": "capacity_rule",
    "capacity_rule": "capacity_rule",
    "capmax": "capacity_max",
    "capacity_max": "capacity_max",
    "seed": "seed",
    "leaves": "left_count",
}


def parse_gen_spec(text: str) -> GenSpec:
    """Parse ``kind:key=value,...``, e.g. ``forest_union:nl=100,nr=100,lambda=3,seed=2``.

    For ``star`` the keys are ``leaves`` and ``capmax`` (center capacity).
    ``n=K`` sets both sides to ``K // 2``.
    """
    kind, _, rest = text.partition(":")
    try:
        gk = GenKind(kind.strip())
    except ValueError as exc:
        raise InvalidConfig(f"unknown generator kind {kind!r}") from exc
    fields: dict[str, object] = {"kind": gk}
    if gk is GenKind.STAR:
        fields["right_count"] = 1
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise InvalidConfig(f"expected key=value in generator spec, got {item!r}")
        key = key.strip().lower()
        if key == "n":
            fields["left_count"] = fields["right_count"] = int(value) // 2
            continue
        name = _KEY_ALIASES.get(key)
        if name is None:
            raise InvalidConfig(f"unknown generator key {key!r}")
        if name == "edge_prob":
            fields[name] = float(value)
        elif name == "capacity_rule":
            fields[name] = CapacityRule(value.strip())
        else:
            fields[name] = int(value)
    try:
        return GenSpec(**fields)  # type: ignore[arg-type]
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from exc
