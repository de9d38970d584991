"""Project exit criteria; each test prints one PASS/FAIL line in the terminal summary."""

from __future__ import annotations

import math
import time
import warnings
from functools import lru_cache

import numpy as np
import pytest

from sparse_alloc.boosting import BoostStats, boost
from sparse_alloc.generators import CapacityRule, GenKind, GenSpec, gen_star, generate
from sparse_alloc.graph import (
    AllocationInstance,
    build_instance,
    validate_fractional,
    validate_integral,
)
from sparse_alloc.local import (
    EngineConfig,
    finalize,
    high_accuracy_tau,
    round_bound,
    run_rounds,
    run_until_terminated,
)
from sparse_alloc.mpc import (
    GuessExhausted,
    MpcRun,
    derive_schedule,
    run_mpc_with_guessing,
    sampled_sum,
    simulate_mpc,
)
from sparse_alloc.oracle import opt_brute, opt_flow
from sparse_alloc.rng import stream
from sparse_alloc.rounding import default_copies, round_best_of, round_once

pytestmark = pytest.mark.filterwarnings("ignore::sparse_alloc.mpc.GuessExhausted")

EPS_GRID = (0.05, 0.1, 0.25)
LAMBDA_GRID = (1, 2, 4, 8)
SEEDS = range(20)


@lru_cache(maxsize=None)
def grid_instance(lam: int, seed: int) -> AllocationInstance:
    return generate(GenSpec(GenKind.FOREST_UNION, 100, 100, lam=lam, seed=seed))


@lru_cache(maxsize=None)
def grid_opt(lam: int, seed: int) -> int:
    return opt_flow(grid_instance(lam, seed)).opt_size


def _mixed_spec(i: int) -> GenSpec:
    rng = stream(20_000, i)
    n = int(rng.choice([8, 20, 50, 120, 300, 1000], p=[0.2, 0.25, 0.25, 0.15, 0.1, 0.05]))
    half = max(1, n // 2)
    rule = [CapacityRule.ALL_ONE, CapacityRule.UNIFORM_RANDOM, CapacityRule.DEGREE_PROPORTIONAL][i % 3]
    kind = i % 3
    if kind == 0:
        lam = int(rng.integers(1, 6))
        return GenSpec(GenKind.FOREST_UNION, half, half, lam=lam, capacity_rule=rule, capacity_max=3, seed=i)
    if kind == 1:
        return GenSpec(
            GenKind.RANDOM_BIPARTITE, half, half, edge_prob=float(min(1.0, 3.0 / half)),
            capacity_rule=rule, capacity_max=3, seed=i,
        )
    return GenSpec(GenKind.STAR, half, 1, capacity_max=int(rng.integers(1, half + 1)), seed=i)


@pytest.mark.acceptance(1, "feasibility of every pipeline output on 1000 mixed instances")
def test_c1_feasibility_suite(detail):
    start = time.perf_counter()
    failures = []
    outputs = 0
    for i in range(1000):
        spec = _mixed_spec(i)
        inst = gen_star(spec.left_count, spec.capacity_max) if spec.kind is GenKind.STAR else generate(spec)
        eps = (0.05, 0.1, 0.25)[i % 3]
        lam = max(1, inst.arboricity_hint or 1)
        fracs = {
            "local": finalize(inst, run_rounds(inst, EngineConfig(eps, round_bound(lam, eps)))),
            "local_autoterm": run_until_terminated(inst, eps, round_bound(max(inst.n, 1), eps)).allocation,
            "mpc": simulate_mpc(inst, eps, 0.5, lam, seed=i).allocation,
        }
        if i % 4 == 0:
            fracs["mpc_guess"] = run_mpc_with_guessing(inst, eps, 0.5, seed=i)[0]
        ints = {"round": round_best_of(inst, fracs["local_autoterm"], seed=i)}
        if i % 2 == 0:
            ints["boost"] = boost(inst, 0.5, seed=i, max_iterations=1)
        if inst.m <= 400:
            ints["oracle"] = opt_flow(inst).witness
        for name, frac in fracs.items():
            outputs += 1
            if not validate_fractional(inst, frac)[0]:
                failures.append((i, name))
        for name, alloc in ints.items():
            outputs += 1
            if not validate_integral(inst, alloc):
                failures.append((i, name))
    elapsed = time.perf_counter() - start
    detail(f"{outputs} outputs, {len(failures)} infeasible, {elapsed:.1f}s")
    assert not failures, failures[:10]
    assert elapsed < 120.0


@pytest.mark.acceptance(2, "finalize weight x (2+10eps) >= OPT over the eps/lambda/seed grid")
def test_c2_local_guarantee(detail):
    worst = math.inf
    runs = 0
    for eps in EPS_GRID:
        for lam in LAMBDA_GRID:
            for seed in SEEDS:
                inst = grid_instance(lam, seed)
                tau = math.ceil(math.log(4 * lam / eps) / math.log1p(eps)) + 1
                w = finalize(inst, run_rounds(inst, EngineConfig(eps, tau))).weight
                worst = min(worst, w * (2 + 10 * eps) / max(grid_opt(lam, seed) - 1e-6, 1e-12))
                runs += 1
    detail(f"{runs} runs, min weight x (2+10eps) / OPT = {worst:.3f}")
    assert worst >= 1.0


@pytest.mark.acceptance(3, "high-accuracy schedule reaches (1+15eps)")
def test_c3_high_accuracy(detail):
    eps = 0.2
    worst = math.inf
    for seed in range(20):
        inst = generate(GenSpec(GenKind.FOREST_UNION, 50, 50, lam=1 + seed % 4, seed=1000 + seed))
        tau = math.ceil(2 * math.log(2 * inst.right_count / eps) / eps**2) + math.ceil(1 / eps)
        assert tau == high_accuracy_tau(inst.right_count, eps)
        w = finalize(inst, run_rounds(inst, EngineConfig(eps, tau))).weight
        worst = min(worst, w * (1 + 15 * eps) / (opt_flow(inst).opt_size - 1e-6))
    detail(f"min weight x (1+15eps) / OPT = {worst:.3f}")
    assert worst >= 1.0


@pytest.mark.acceptance(4, "self-termination within the lambda bound; rounds independent of n")
def test_c4_termination(detail):
    late = []
    worst = math.inf
    for eps in EPS_GRID:
        for lam in LAMBDA_GRID:
            bound = math.ceil(math.log(4 * lam / eps) / math.log1p(eps)) + 1
            for seed in range(10):
                inst = grid_instance(lam, seed)
                res = run_until_terminated(inst, eps, 10 * bound)
                if res.budget_exhausted or res.rounds_used > bound:
                    late.append((eps, lam, seed, res.rounds_used))
                worst = min(worst, res.allocation.weight * (2 + 10 * eps) / (grid_opt(lam, seed) - 1e-6))
    means = []
    for n in (100, 400, 1600):
        rounds = [
            run_until_terminated(
                generate(GenSpec(GenKind.FOREST_UNION, n // 2, n // 2, lam=2, seed=s)), 0.1, 10_000
            ).rounds_used
            for s in range(20)
        ]
        means.append(float(np.mean(rounds)))
    spread = (max(means) - min(means)) / min(means)
    detail(f"late={len(late)}, min weight x (2+10eps) / OPT = {worst:.3f}, mean rounds {means}, spread {spread:.1%}")
    assert not late, late[:5]
    assert worst >= 1.0
    assert spread < 0.20


@pytest.mark.acceptance(5, "sampling lemma: relative error <= 4eps in >= 99% of trials")
def test_c5_sampling_lemma(detail):
    start = time.perf_counter()
    eps, n = 0.2, 1000
    tp = (1 + eps) ** 3
    s = math.ceil(20 * tp**2 * math.log(n) / eps**4)
    values = 1.0 * np.exp(stream(5, 0).uniform(-math.log(tp), math.log(tp), size=n))
    values[0], values[1] = 1.0 / tp, tp
    exact = math.fsum(values)
    ok = 0
    for trial in range(1000):
        est = sampled_sum(values, s, stream(5, 1, trial))
        ok += abs(est - exact) <= 4 * eps * exact
    elapsed = time.perf_counter() - start
    detail(f"s={s}, {ok}/1000 within 4eps, {elapsed:.1f}s")
    assert ok >= 990
    assert elapsed < 60.0


def _violation_rate(runs: list[MpcRun], eps: float) -> tuple[int, int]:
    bad = total = 0
    for run in runs:
        for rec in run.records:
            total += len(rec.exact_alloc)
            bad += int(np.sum(np.abs(rec.est_alloc - rec.exact_alloc) > (eps / 4) * rec.exact_alloc))
    return bad, total


@pytest.mark.acceptance(6, "MPC estimates within (eps/4) alloc for >= 99% of (vertex, round)")
def test_c6_estimate_quality(detail):
    eps = 0.1
    default_runs, forced_runs = [], []
    sampled_groups = 0
    for seed in range(50):
        lam = (2, 4, 8)[seed % 3]
        half = (100, 250, 500)[seed % 3]
        inst = generate(GenSpec(GenKind.FOREST_UNION, half, half, lam=lam, seed=300 + seed))
        default_runs.append(simulate_mpc(inst, eps, 0.5, lam, seed=seed, record=True))
        # a small sample budget forces the sampled branch on high-degree groups
        forced = simulate_mpc(inst, eps, 0.5, lam, seed=seed, t=16, record=True)
        forced_runs.append(forced)
    bad_d, tot_d = _violation_rate(default_runs, eps)
    bad_f, tot_f = _violation_rate(forced_runs, eps)
    detail(f"default t: {bad_d}/{tot_d}; t=16: {bad_f}/{tot_f} ({bad_f / tot_f:.3%})")
    assert bad_d <= 0.01 * tot_d
    assert bad_f <= 0.01 * tot_f


@pytest.mark.acceptance(7, "MPC with guessing is (2+16eps)-approximate; schedule replay is exact")
def test_c7_mpc_guarantee_and_replay(detail):
    eps = 0.1
    good = total = 0
    for lam in LAMBDA_GRID:
        for seed in SEEDS:
            inst = grid_instance(lam, seed)
            frac, _, _ = run_mpc_with_guessing(inst, eps, 0.5, seed=seed)
            total += 1
            good += frac.weight * (2 + 16 * eps) >= grid_opt(lam, seed)
    replay_ok = 0
    k_range = [math.inf, 0.0]
    for j in range(20):
        lam = LAMBDA_GRID[j % 4]
        inst = grid_instance(lam, j)
        run = simulate_mpc(inst, eps, 0.5, lam, seed=j, t=(16 if j % 2 else None), record=True)
        sched = derive_schedule(run.records, inst.capacity_array)
        k_range = [min(k_range[0], float(sched.min())), max(k_range[1], float(sched.max()))]
        history: list[np.ndarray] = []
        run_rounds(inst, EngineConfig(eps, run.tau, sched), history=history)
        replay_ok += all(
            np.array_equal(h, rec.exponent) for h, rec in zip(history, run.records, strict=True)
        )
    detail(f"{good}/{total} within 2+16eps; replay {replay_ok}/20; k in {k_range}")
    assert good >= 0.98 * total
    assert replay_ok == 20
    assert 0.25 <= k_range[0] and k_range[1] <= 4.0


@pytest.mark.acceptance(8, "exact-branch MPC equals the LOCAL trajectory bit for bit")
def test_c8_exact_branch(detail):
    same = 0
    for seed in range(50):
        half = 3 + seed % 20
        inst = generate(GenSpec(GenKind.FOREST_UNION, half, half, lam=1 + seed % 3, seed=seed))
        eps = (0.05, 0.1, 0.25)[seed % 3]
        run = simulate_mpc(inst, eps, 0.5, 4, seed=seed, record=True)
        assert max(inst.left_degree.max(), inst.right_degree.max()) <= run.config.t
        history: list[np.ndarray] = []
        state = run_rounds(inst, EngineConfig(eps, run.tau), history=history)
        traj = all(np.array_equal(h, r.exponent) for h, r in zip(history, run.records, strict=True))
        alloc = all(
            np.array_equal(r.exact_alloc, r.est_alloc) for r in run.records
        ) and np.array_equal(state.exponent, run.state.exponent)
        same += traj and alloc
    detail(f"{same}/50 identical")
    assert same == 50


def _rounding_instances() -> list[AllocationInstance]:
    return [
        generate(GenSpec(GenKind.FOREST_UNION, 25, 25, lam=2, seed=91)),
        generate(GenSpec(GenKind.FOREST_UNION, 40, 40, lam=4, seed=92,
                         capacity_rule=CapacityRule.UNIFORM_RANDOM, capacity_max=3)),
        generate(GenSpec(GenKind.RANDOM_BIPARTITE, 30, 30, edge_prob=0.1, seed=93)),
        gen_star(60, 20),
        generate(GenSpec(GenKind.FOREST_UNION, 50, 50, lam=2, seed=94)),
    ]


@pytest.mark.acceptance(9, "rounding: mean |M| >= 0.9 weight/9; best-of >= weight/450 in >= 95%")
def test_c9_rounding(detail):
    lines = []
    infeasible = 0
    for idx, inst in enumerate(_rounding_instances()):
        frac = run_until_terminated(inst, 0.1, 200).allocation
        sizes = []
        for trial in range(2000):
            kept = round_once(inst, frac, stream(idx, 7, trial)).kept_edges
            infeasible += not validate_integral(inst, kept)
            sizes.append(len(kept))
        mean = float(np.mean(sizes))
        assert mean >= 0.9 * frac.weight / 9, (idx, mean, frac.weight)
        hits = 0
        copies = default_copies(inst.n)
        for trial in range(200):
            best = round_best_of(inst, frac, copies, seed=10_000 * idx + trial)
            infeasible += not validate_integral(inst, best)
            hits += len(best) >= frac.weight / 450
        assert hits >= 190, (idx, hits)
        lines.append(f"{mean / (frac.weight / 9):.2f}x/{hits}")
    detail(f"mean ratio/best-of hits per instance: {', '.join(lines)}; infeasible={infeasible}")
    assert infeasible == 0


@pytest.mark.acceptance(10, "opt_flow equals opt_brute on 200 instances with m <= 20")
def test_c10_oracle_cross_check(detail):
    mismatches = []
    for i in range(200):
        rng = stream(4242, i)
        nl, nr = int(rng.integers(1, 7)), int(rng.integers(1, 6))
        pairs = [(u, nl + v) for u in range(nl) for v in range(nr)]
        m = int(rng.integers(0, min(20, len(pairs)) + 1))
        chosen = rng.choice(len(pairs), size=m, replace=False)
        caps = rng.integers(1, 4, size=nr).tolist()
        inst = build_instance(nl, nr, [pairs[j] for j in chosen], caps)
        flow = opt_flow(inst)
        assert validate_integral(inst, flow.witness) and len(flow.witness) == flow.opt_size
        if flow.opt_size != opt_brute(inst):
            mismatches.append(i)
    detail(f"{len(mismatches)} mismatches")
    assert not mismatches


@pytest.mark.acceptance(11, "boost reaches 0.75 OPT in >= 90% of runs; |M| never shrinks")
def test_c11_boost(detail):
    reached = 0
    monotone = True
    for seed in range(20):
        half = 20 + 2 * seed
        inst = generate(GenSpec(GenKind.FOREST_UNION, half, half, lam=1 + seed % 2, seed=500 + seed))
        trace: list[BoostStats] = []
        start = boost(inst, 0.25, seed=seed, max_iterations=0)
        got = boost(inst, 0.25, seed=seed, trace=trace)
        sizes = [len(start)] + [row.matching_size for row in trace]
        monotone &= all(a <= b for a, b in zip(sizes, sizes[1:]))
        assert validate_integral(inst, got)
        reached += len(got) >= 0.75 * opt_flow(inst).opt_size
    detail(f"{reached}/20 reached 0.75 OPT; monotone={monotone}")
    assert reached >= 18
    assert monotone


def test_guessing_warns_only_when_exhausted():
    inst = gen_star(5, 5)
    with warnings.catch_warnings():
        warnings.simplefilter("error", GuessExhausted)
        _, cost, lam = run_mpc_with_guessing(inst, 0.1, 0.5)
    assert lam == 16 and not cost.guess_exhausted
