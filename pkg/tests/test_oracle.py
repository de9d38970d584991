from __future__ import annotations

import pytest
from hypothesis import given, settings

from sparse_alloc.generators import gen_star
from sparse_alloc.graph import build_instance, validate_integral
from sparse_alloc.oracle import BRUTE_MAX_EDGES, TooLarge, opt_brute, opt_flow

from test_graph import instances


def test_flow_examples():
    assert opt_flow(build_instance(1, 1, [(0, 1)], [1])).opt_size == 1
    assert opt_flow(gen_star(5, 2)).opt_size == 2
    k33 = build_instance(3, 3, [(u, 3 + v) for u in range(3) for v in range(3)], [1, 1, 1])
    res = opt_flow(k33)
    assert res.opt_size == 3 and len(res.witness) == 3 and validate_integral(k33, res.witness)
    assert opt_flow(build_instance(2, 2, [], [1, 1])).opt_size == 0


def test_brute_examples():
    assert opt_brute(build_instance(1, 1, [(0, 1)], [1])) == 1
    k22 = build_instance(2, 2, [(0, 2), (0, 3), (1, 2), (1, 3)], [1, 1])
    assert opt_brute(k22) == 2


def test_brute_refuses_large_instances():
    inst = build_instance(5, 5, [(u, 5 + v) for u in range(5) for v in range(5)], [1] * 5)
    assert inst.m > BRUTE_MAX_EDGES
    with pytest.raises(TooLarge):
        opt_brute(inst)


@settings(max_examples=150, deadline=None)
@given(instances(max_side=5, max_cap=3))
def test_flow_equals_brute(inst):
    res = opt_flow(inst)
    assert res.opt_size == opt_brute(inst)
    assert len(res.witness) == res.opt_size and validate_integral(inst, res.witness)
