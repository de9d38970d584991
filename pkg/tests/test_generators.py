from __future__ import annotations

import math
import warnings

import networkx as nx
import pytest

from sparse_alloc.generators import (
    CapacityRule,
    GenKind,
    GenSpec,
    InfeasibleSpec,
    gen_forest_union,
    gen_random_bipartite,
    gen_star,
    generate,
    parse_gen_spec,
)
from sparse_alloc.graph import InvalidConfig, degeneracy
from sparse_alloc.oracle import opt_flow


def forest(lam: int, nl: int, nr: int, seed: int, **kw) -> GenSpec:
    return GenSpec(GenKind.FOREST_UNION, nl, nr, lam=lam, seed=seed, **kw)


def test_single_forest_is_a_forest():
    inst = gen_forest_union(forest(1, 4, 4, 0))
    assert inst.m <= 7
    assert nx.is_forest(inst.to_networkx())
    assert degeneracy(inst) == 1


@pytest.mark.parametrize("seed", range(20))
def test_single_forest_is_acyclic_for_many_seeds(seed):
    assert nx.is_forest(gen_forest_union(forest(1, 30, 25, seed)).to_networkx())


def test_forest_union_degeneracy_bound_seed_7():
    inst = gen_forest_union(forest(3, 100, 100, 7))
    assert inst.arboricity_hint == 3
    assert degeneracy(inst) <= 5


def test_forest_union_degeneracy_over_many_seeds():
    for seed in range(100):
        lam = 1 + seed % 4
        inst = gen_forest_union(forest(lam, 30, 30, seed))
        assert degeneracy(inst) <= 2 * lam - 1, (seed, lam)


def test_forest_union_is_deterministic():
    a = gen_forest_union(forest(3, 50, 40, 11))
    b = gen_forest_union(forest(3, 50, 40, 11))
    c = gen_forest_union(forest(3, 50, 40, 12))
    assert a.edges == b.edges
    assert a.edges != c.edges


def test_forest_union_warns_when_lambda_is_large():
    with pytest.warns(InfeasibleSpec):
        inst = gen_forest_union(forest(4, 4, 6, 0))
    assert inst.arboricity_hint == 4
    with warnings.catch_warnings():
        warnings.simplefilter("error", InfeasibleSpec)
        gen_forest_union(forest(2, 4, 6, 0))


def test_forest_union_rejects_other_kinds():
    with pytest.raises(InvalidConfig):
        gen_forest_union(GenSpec(GenKind.STAR, 3, 1))


def test_star_examples():
    one = gen_star(1, 1)
    assert (one.n, one.m) == (2, 1)
    assert opt_flow(gen_star(5, 5)).opt_size == 5
    assert opt_flow(gen_star(5, 2)).opt_size == 2
    with pytest.raises(InvalidConfig):
        gen_star(0, 1)


def test_random_bipartite_examples():
    empty = gen_random_bipartite(GenSpec(GenKind.RANDOM_BIPARTITE, 5, 5, edge_prob=0.0))
    assert empty.m == 0
    full = gen_random_bipartite(GenSpec(GenKind.RANDOM_BIPARTITE, 3, 3, edge_prob=1.0))
    assert full.m == 9
    assert degeneracy(full) == 3 and full.arboricity_hint == 3
    spec = GenSpec(GenKind.RANDOM_BIPARTITE, 20, 20, edge_prob=0.3, seed=1)
    assert gen_random_bipartite(spec).edges == gen_random_bipartite(spec).edges


def test_random_bipartite_target_m():
    inst = generate(GenSpec(GenKind.RANDOM_BIPARTITE, 10, 7, target_m=33, seed=4))
    assert inst.m == 33
    with pytest.raises(InvalidConfig):
        generate(GenSpec(GenKind.RANDOM_BIPARTITE, 2, 2, target_m=5))


def test_capacity_rules():
    base = dict(lam=2, seed=3)
    ones = generate(forest(nl=20, nr=20, **base))
    assert set(ones.capacities) == {1}
    uni = generate(forest(nl=20, nr=20, capacity_rule=CapacityRule.UNIFORM_RANDOM, capacity_max=4, **base))
    assert all(1 <= c <= 4 for c in uni.capacities)
    assert len(set(uni.capacities)) > 1
    deg = generate(forest(nl=20, nr=20, capacity_rule=CapacityRule.DEGREE_PROPORTIONAL, **base))
    for j, c in enumerate(deg.capacities):
        assert c == max(1, math.ceil(deg.right_degree[j] / 2))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind=GenKind.FOREST_UNION, lam=0),
        dict(kind=GenKind.RANDOM_BIPARTITE, edge_prob=1.5),
        dict(kind=GenKind.RANDOM_BIPARTITE, left_count=-1),
        dict(kind=GenKind.FOREST_UNION, capacity_max=0),
    ],
)
def test_gen_spec_validation(kwargs):
    with pytest.raises(InvalidConfig):
        GenSpec(**kwargs)


def test_parse_gen_spec():
    spec = parse_gen_spec("forest_union:nl=100,nr=80,lambda=3,seed=2")
    assert (spec.kind, spec.left_count, spec.right_count, spec.lam, spec.seed) == (
        GenKind.FOREST_UNION, 100, 80, 3, 2,
    )
    both = parse_gen_spec("random_bipartite:n=40,p=0.1,cap=uniform_random,capmax=3")
    assert (both.left_count, both.right_count, both.edge_prob) == (20, 20, 0.1)
    assert both.capacity_rule is CapacityRule.UNIFORM_RANDOM
    star = generate(parse_gen_spec("star:leaves=5,capmax=2"))
    assert star == gen_star(5, 2)
    for bad in ("cube:n=4", "forest_union:lambda", "forest_union:size=3"):
        with pytest.raises(InvalidConfig):
            parse_gen_spec(bad)
