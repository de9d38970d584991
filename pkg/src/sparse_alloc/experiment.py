"""Experiment runner: pipelines, JSON reports, parameter sweeps and allocation files."""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import itertools
import json
import math
import os
import time
import warnings
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np

from .boosting import BoostStats, boost
from .generators import GenSpec, generate, parse_gen_spec
from .graph import (
    AllocationInstance,
    FractionalAllocation,
    IntegralAllocation,
    InvalidConfig,
    MalformedInstance,
    read_instance,
    validate_fractional,
    validate_integral,
)
from .local import (
    EngineConfig,
    RoundStats,
    finalize,
    round_bound,
    run_rounds,
    run_until_terminated,
)
from .mpc import GuessExhausted, MpcRun, run_mpc_with_guessing, simulate_mpc
from .oracle import opt_flow
from .rounding import default_copies, round_best_of

__all__ = [
    "Pipeline",
    "ExperimentSpec",
    "ExperimentResult",
    "ORACLE_MAX_EDGES",
    "THREADS_ENV",
    "run_experiment",
    "execute",
    "report_json",
    "sweep",
    "sweep_csv",
    "SWEEP_COLUMNS",
    "format_allocation",
    "parse_allocation",
    "read_allocation",
    "write_allocation",
    "audit",
]

ORACLE_MAX_EDGES = 200_000
THREADS_ENV = "SPARSE_ALLOC_THREADS"
SIG_DIGITS = 12


class Pipeline(str, enum.Enum):
    LOCAL = "local"
    LOCAL_AUTOTERM = "local_autoterm"
    MPC = "mpc"
    MPC_GUESS = "mpc_guess"
    ROUND = "round"
    BOOST = "boost"
    ORACLE = "oracle"


@dataclass(frozen=True)
class ExperimentSpec:
    pipeline: Pipeline = Pipeline.LOCAL
    gen: GenSpec | None = None
    instance_path: str | None = None
    epsilon: float = 0.1
    alpha: float = 0.5
    tau: int | None = None
    copies: int | None = None
    seed: int = 0
    lambda_guess: int | None = None
    """Arboricity bound for ``local``/``mpc``; defaults to the instance hint."""
    max_iterations: int | None = None
    out: str | None = None
    trace: str | None = None

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "pipeline", Pipeline(self.pipeline))
        except ValueError as exc:
            raise InvalidConfig(f"unknown pipeline {self.pipeline!r}") from exc
        if (self.gen is None) == (self.instance_path is None):
            raise InvalidConfig("exactly one of gen / instance_path is required")
        if not 0.0 < self.epsilon <= 1.0:
            raise InvalidConfig(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidConfig(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.tau is not None and self.tau < 1:
            raise InvalidConfig("tau must be >= 1")
        if self.copies is not None and self.copies < 1:
            raise InvalidConfig("copies must be >= 1")
        if self.lambda_guess is not None and self.lambda_guess < 1:
            raise InvalidConfig("lambda_guess must be >= 1")
        if self.seed < 0:
            raise InvalidConfig("seed must be non-negative")

    def load_instance(self) -> AllocationInstance:
        if self.gen is not None:
            return generate(self.gen)
        assert self.instance_path is not None
        return read_instance(self.instance_path)


@dataclass
class ExperimentResult:
    report: dict[str, Any]
    instance: AllocationInstance
    allocation: FractionalAllocation | IntegralAllocation | None
    trace_header: list[str]
    trace_rows: list[list[Any]]

    @property
    def feasible(self) -> bool:
        return bool(self.report["feasible"])


def _lam(spec: ExperimentSpec, instance: AllocationInstance) -> int:
    if spec.lambda_guess is not None:
        return spec.lambda_guess
    return max(1, instance.arboricity_hint or 1)


def _local_rows(trace: list[RoundStats]) -> tuple[list[str], list[list[Any]]]:
    return list(RoundStats._fields), [list(r) for r in trace]


def _mpc_rows(run: MpcRun) -> tuple[list[str], list[list[Any]]]:
    header = ["round", "num_increased", "num_decreased", "max_rel_error"]
    rows = []
    for rec in run.records:
        pos = rec.exact_alloc > 0
        err = np.abs(rec.est_alloc[pos] - rec.exact_alloc[pos]) / rec.exact_alloc[pos]
        rows.append(
            [rec.round, int(rec.increased.sum()), int(rec.decreased.sum()),
             float(err.max()) if err.size else 0.0]
        )
    return header, rows


def _cost_dict(cost) -> dict[str, Any]:
    return dataclasses.asdict(cost)


def execute(spec: ExperimentSpec) -> ExperimentResult:
    """Run the pipeline and build the report (nothing is written to disk)."""
    instance = spec.load_instance()
    eps = spec.epsilon
    report: dict[str, Any] = {
        "pipeline": spec.pipeline.value,
        "instance": {
            "source": spec.instance_path if spec.gen is None else _gen_text(spec.gen),
            "left_count": instance.left_count,
            "right_count": instance.right_count,
            "m": instance.m,
            "arboricity_hint": instance.arboricity_hint,
        },
        "params": {
            "epsilon": eps,
            "alpha": spec.alpha,
            "tau": spec.tau,
            "copies": spec.copies,
            "seed": spec.seed,
            "lambda_guess": spec.lambda_guess,
            "max_iterations": spec.max_iterations,
        },
        "rounds_used": None,
        "cost": None,
        "lambda_used": None,
    }
    header: list[str] = []
    rows: list[list[Any]] = []
    allocation: FractionalAllocation | IntegralAllocation | None = None
    p = spec.pipeline

    if p is Pipeline.LOCAL:
        tau = spec.tau or round_bound(_lam(spec, instance), eps)
        trace: list[RoundStats] = []
        state = run_rounds(instance, EngineConfig(eps, tau), trace=trace)
        allocation = finalize(instance, state)
        report["rounds_used"] = tau
        header, rows = _local_rows(trace)
    elif p in (Pipeline.LOCAL_AUTOTERM, Pipeline.ROUND):
        budget = spec.tau or round_bound(max(instance.n, 1), eps)
        trace = []
        res = run_until_terminated(instance, eps, budget, trace=trace)
        report["rounds_used"] = res.rounds_used
        report["budget_exhausted"] = res.budget_exhausted
        allocation = res.allocation
        header, rows = _local_rows(trace)
        if p is Pipeline.ROUND:
            ok, w = validate_fractional(instance, res.allocation)
            report["fractional_weight"] = w
            report["fractional_feasible"] = ok
            copies = spec.copies or default_copies(instance.n)
            report["params"]["copies"] = copies
            allocation = round_best_of(instance, res.allocation, copies, seed=spec.seed)
    elif p is Pipeline.MPC:
        lam = _lam(spec, instance)
        run = simulate_mpc(instance, eps, spec.alpha, lam, spec.seed, tau=spec.tau, record=True)
        allocation = run.allocation
        report["rounds_used"] = run.tau
        report["lambda_used"] = lam
        report["cost"] = _cost_dict(run.cost)
        report["B"], report["t"] = run.config.B, run.config.t
        header, rows = _mpc_rows(run)
    elif p is Pipeline.MPC_GUESS:
        runs: list[MpcRun] = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", GuessExhausted)
            allocation, cost, lam = run_mpc_with_guessing(
                instance, eps, spec.alpha, spec.seed, runs=runs
            )
        report["rounds_used"] = sum(r.tau for r in runs)
        report["lambda_used"] = lam
        report["cost"] = _cost_dict(cost)
    elif p is Pipeline.BOOST:
        btrace: list[BoostStats] = []
        allocation = boost(
            instance, eps, seed=spec.seed, max_iterations=spec.max_iterations, trace=btrace
        )
        report["rounds_used"] = len(btrace)
        header, rows = list(BoostStats._fields), [list(r) for r in btrace]
    elif p is Pipeline.ORACLE:
        allocation = opt_flow(instance).witness

    if isinstance(allocation, IntegralAllocation):
        feasible = validate_integral(instance, allocation)
        weight: float = float(len(allocation))
        report["kind"] = "integral"
    else:
        assert allocation is not None
        feasible, weight = validate_fractional(instance, allocation)
        report["kind"] = "fractional"
    if p is Pipeline.ROUND:
        feasible = feasible and report["fractional_feasible"]
    report["weight"] = weight
    report["feasible"] = bool(feasible)
    report["opt"] = opt_flow(instance).opt_size if instance.m <= ORACLE_MAX_EDGES else None
    report["ratio"] = _ratio(report["opt"], weight)
    report["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    return ExperimentResult(report, instance, allocation, header, rows)


def _ratio(opt: int | None, weight: float) -> float | None:
    if opt is None:
        return None
    if opt == 0:
        return 1.0
    if weight <= 0:
        return math.inf
    return opt / weight


def _gen_text(gen: GenSpec) -> str:
    parts = [f"nl={gen.left_count}", f"nr={gen.right_count}", f"lambda={gen.lam}"]
    if gen.edge_prob is not None:
        parts.append(f"p={gen.edge_prob}")
    if gen.target_m is not None:
        parts.append(f"m={gen.target_m}")
    parts += [f"cap={gen.capacity_rule.value}", f"capmax={gen.capacity_max}", f"seed={gen.seed}"]
    return f"{gen.kind.value}:" + ",".join(parts)


def _fmt(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return str(v)
        return float(format(v, f".{SIG_DIGITS}g"))
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Mapping):
        return {k: _fmt(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_fmt(v) for v in value]
    return value


def report_json(report: Mapping[str, Any]) -> str:
    """JSON text with floats cut to 12 significant digits."""
    return json.dumps(_fmt(report), indent=2, sort_keys=True) + "\n"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_csv_cell(c) for c in row])
    return buf.getvalue()


def _csv_cell(value: Any) -> Any:
    v = _fmt(value)
    if v is None:
        return ""
    return v


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Execute and write the JSON report to ``spec.out`` and the trace to ``spec.trace``."""
    result = execute(spec)
    if spec.out:
        with open(spec.out, "w", encoding="utf-8") as fh:
            fh.write(report_json(result.report))
    if spec.trace:
        with open(spec.trace, "w", encoding="utf-8") as fh:
            fh.write(_csv_text(result.trace_header, result.trace_rows))
    return result


# -- sweeps ----------------------------------------------------------------

SWEEP_COLUMNS = ["pipeline", "n", "m", "rounds_used", "weight", "opt", "ratio", "mpc_rounds", "feasible"]

_SPEC_KEYS = {
    "eps": "epsilon",
    "epsilon": "epsilon",
    "alpha": "alpha",
    "tau": "tau",
    "copies": "copies",
    "pipeline": "pipeline",
    "lambda_guess": "lambda_guess",
    "max_iterations": "max_iterations",
}
_GEN_KEYS = {
    "lambda": "lam",
    "lam": "lam",
    "nl": "left_count",
    "nr": "right_count",
    "p": "edge_prob",
    "m": "target_m",
    "capmax": "capacity_max",
    "cap": "capacity_rule",
}


def _grid_spec(template: ExperimentSpec, point: Mapping[str, Any]) -> ExperimentSpec:
    spec_changes: dict[str, Any] = {"out": None, "trace": None}
    gen_changes: dict[str, Any] = {}
    for key, value in point.items():
        if key == "seed":
            spec_changes["seed"] = int(value)
            gen_changes["seed"] = int(value)
        elif key == "n":
            gen_changes["left_count"] = gen_changes["right_count"] = int(value) // 2
        elif key in _SPEC_KEYS:
            spec_changes[_SPEC_KEYS[key]] = value
        elif key in _GEN_KEYS:
            gen_changes[_GEN_KEYS[key]] = value
        else:
            raise InvalidConfig(f"unknown sweep parameter {key!r}")
    if gen_changes:
        if template.gen is None:
            if set(gen_changes) != {"seed"}:
                raise InvalidConfig("generator parameters need a --gen template")
        else:
            spec_changes["gen"] = dataclasses.replace(template.gen, **gen_changes)
    return dataclasses.replace(template, **spec_changes)


def _sweep_row(args: tuple[ExperimentSpec, tuple[Any, ...]]) -> list[Any]:
    spec, values = args
    rep = execute(spec).report
    inst = rep["instance"]
    cost = rep.get("cost") or {}
    return [
        *values,
        rep["pipeline"],
        inst["left_count"] + inst["right_count"],
        inst["m"],
        rep["rounds_used"],
        rep["weight"],
        rep["opt"],
        rep["ratio"],
        cost.get("mpc_rounds"),
        rep["feasible"],
    ]


def _workers(jobs: int) -> int:
    raw = os.environ.get(THREADS_ENV)
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError as exc:
            raise InvalidConfig(f"{THREADS_ENV} must be an integer") from exc
    return max(1, min(cap, jobs))


def sweep(
    template: ExperimentSpec, grid: Mapping[str, Sequence[Any]]
) -> tuple[list[str], list[list[Any]]]:
    """One row per point of the Cartesian grid, in grid order."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise InvalidConfig("sweep grid must be nonempty")
    keys = list(grid)
    points = list(itertools.product(*(grid[k] for k in keys)))
    jobs = [(_grid_spec(template, dict(zip(keys, vals))), vals) for vals in points]
    workers = _workers(len(jobs))
    if workers == 1:
        rows = [_sweep_row(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    return keys + SWEEP_COLUMNS, rows


def sweep_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    return _csv_text(header, rows)


def parse_grid(items: Sequence[str]) -> dict[str, list[Any]]:
    """``key=v1,v2,...`` items to a grid; values are parsed as int, float, then str."""
    grid: dict[str, list[Any]] = {}
    for item in items:
        key, sep, vals = item.partition("=")
        if not sep or not vals:
            raise InvalidConfig(f"expected key=v1,v2,... got {item!r}")
        grid[key.strip()] = [_scalar(v.strip()) for v in vals.split(",")]
    return grid


def _scalar(text: str) -> Any:
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


# -- allocation files ------------------------------------------------------


def format_allocation(
    instance: AllocationInstance, alloc: FractionalAllocation | IntegralAllocation
) -> str:
    """``integral K`` + ``edge u v`` lines, or ``fractional M`` + ``x u v value`` lines."""
    out = io.StringIO()
    if isinstance(alloc, IntegralAllocation):
        out.write(f"integral {len(alloc)}\n")
        for e in sorted(alloc.edge_subset):
            u, v = instance.edges[e]
            out.write(f"edge {u} {v}\n")
    else:
        out.write(f"fractional {instance.m}\n")
        for (u, v), x in zip(instance.edges, alloc.values.tolist()):
            out.write(f"x {u} {v} {x!r}\n")
    return out.getvalue()


def parse_allocation(
    instance: AllocationInstance, text: str
) -> FractionalAllocation | IntegralAllocation:
    lines = [ln.split("#", 1)[0].split() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or len(lines[0]) != 2 or lines[0][0] not in ("integral", "fractional"):
        raise MalformedInstance("allocation file needs an 'integral K' or 'fractional M' header")
    kind = lines[0][0]
    try:
        count = int(lines[0][1])
    except ValueError as exc:
        raise MalformedInstance("bad allocation header count") from exc
    body = lines[1:]
    if len(body) != count:
        raise MalformedInstance(f"expected {count} allocation lines, got {len(body)}")
    index = instance.edge_index
    if kind == "integral":
        chosen = []
        for toks in body:
            if len(toks) != 3 or toks[0] != "edge":
                raise MalformedInstance(f"bad allocation line {' '.join(toks)!r}")
            e = index.get(_pair(toks[1:3]))
            if e is None:
                raise MalformedInstance(f"edge {toks[1]}-{toks[2]} is not in the instance")
            chosen.append(e)
        if len(set(chosen)) != len(chosen):
            raise MalformedInstance("duplicate edge in allocation")
        return IntegralAllocation.of(chosen)
    x = np.zeros(instance.m)
    seen = set()
    for toks in body:
        if len(toks) != 4 or toks[0] != "x":
            raise MalformedInstance(f"bad allocation line {' '.join(toks)!r}")
        e = index.get(_pair(toks[1:3]))
        if e is None or e in seen:
            raise MalformedInstance(f"edge {toks[1]}-{toks[2]} unknown or repeated")
        seen.add(e)
        try:
            x[e] = float(toks[3])
        except ValueError as exc:
            raise MalformedInstance(f"bad value {toks[3]!r}") from exc
    return FractionalAllocation.from_values(x)


def _pair(toks: Sequence[str]) -> tuple[int, int]:
    try:
        return int(toks[0]), int(toks[1])
    except ValueError as exc:
        raise MalformedInstance(f"non-integer vertex in {toks!r}") from exc


def read_allocation(
    instance: AllocationInstance, path: str | os.PathLike[str]
) -> FractionalAllocation | IntegralAllocation:
    with open(path, encoding="utf-8") as fh:
        return parse_allocation(instance, fh.read())


def write_allocation(
    instance: AllocationInstance,
    alloc: FractionalAllocation | IntegralAllocation,
    path: str | os.PathLike[str],
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_allocation(instance, alloc))


def audit(
    instance: AllocationInstance, alloc: FractionalAllocation | IntegralAllocation
) -> dict[str, Any]:
    """Feasibility and approximation ratio of a stored allocation."""
    if isinstance(alloc, IntegralAllocation):
        ok, weight, kind = validate_integral(instance, alloc), float(len(alloc)), "integral"
    else:
        (ok, weight), kind = validate_fractional(instance, alloc), "fractional"
    opt = opt_flow(instance).opt_size if instance.m <= ORACLE_MAX_EDGES else None
    return {"kind": kind, "feasible": bool(ok), "weight": weight, "opt": opt, "ratio": _ratio(opt, weight)}


def spec_from_gen_text(text: str, **kwargs: Any) -> ExperimentSpec:
    return ExperimentSpec(gen=parse_gen_spec(text), **kwargs)
