"""``sparse-alloc`` command line.

Exit codes: 0 success with every allocation feasible, 1 an infeasible
allocation was produced or audited, 2 usage error, 3 I/O error,
4 malformed instance or allocation file, 5 invalid configuration.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence

from .experiment import (
    ExperimentSpec,
    Pipeline,
    audit,
    format_allocation,
    parse_grid,
    read_allocation,
    report_json,
    run_experiment,
    sweep,
    sweep_csv,
    write_allocation,
)
from .generators import generate, parse_gen_spec
from .graph import (
    FractionalAllocation,
    InvalidConfig,
    MalformedInstance,
    format_instance,
    read_instance,
    validate_integral,
)
from .oracle import opt_flow
from .rounding import default_copies, round_best_of

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_MALFORMED = 4
EXIT_CONFIG = 5


def _add_source(p: argparse.ArgumentParser, required: bool = True) -> None:
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--instance", metavar="PATH", help="instance file")
    g.add_argument("--gen", metavar="SPEC", help="generator spec, e.g. forest_union:n=200,lambda=3,seed=1")


def _add_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--tau", type=int, default=None, help="round count or budget override")
    p.add_argument("--copies", type=int, default=None, help="rounding copies")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lambda_guess", type=int, default=None,
                   help="arboricity bound (default: instance hint)")
    p.add_argument("--max-iterations", type=int, default=None, help="boost iteration cap")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sparse-alloc", description="Allocation on sparse bipartite graphs.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a generated instance")
    g.add_argument("--gen", required=True, metavar="SPEC")
    g.add_argument("--out", metavar="PATH", help="instance file (default: stdout)")

    r = sub.add_parser("run", help="run a pipeline and emit a JSON report")
    _add_source(r)
    r.add_argument("--pipeline", required=True, choices=[p.value for p in Pipeline])
    _add_params(r)
    r.add_argument("--out", metavar="PATH", help="JSON report (default: stdout)")
    r.add_argument("--trace", metavar="PATH", help="per-round / per-iteration CSV trace")
    r.add_argument("--alloc-out", metavar="PATH", help="write the allocation")

    s = sub.add_parser("sweep", help="run a pipeline over a parameter grid; CSV output")
    _add_source(s)
    s.add_argument("--pipeline", required=True, choices=[p.value for p in Pipeline])
    _add_params(s)
    s.add_argument("--vary", action="append", default=[], metavar="KEY=V1,V2",
                   help="grid axis; repeat for a Cartesian grid")
    s.add_argument("--out", metavar="PATH", help="CSV table (default: stdout)")

    o = sub.add_parser("oracle", help="exact optimum by max-flow")
    _add_source(o)
    o.add_argument("--alloc-out", metavar="PATH", help="write an optimal allocation")

    rd = sub.add_parser("round", help="round a stored fractional allocation")
    rd.add_argument("--instance", required=True, metavar="PATH")
    rd.add_argument("--alloc", required=True, metavar="PATH", help="fractional allocation file")
    rd.add_argument("--copies", type=int, default=None)
    rd.add_argument("--seed", type=int, default=0)
    rd.add_argument("--out", metavar="PATH", help="integral allocation (default: stdout)")

    b = sub.add_parser("boost", help="augment toward a (1+eps)-approximate integral allocation")
    _add_source(b)
    _add_params(b)
    b.add_argument("--out", metavar="PATH", help="JSON report (default: stdout)")
    b.add_argument("--trace", metavar="PATH", help="CSV: iter, matching_size, walks_applied")
    b.add_argument("--alloc-out", metavar="PATH")

    v = sub.add_parser("verify", help="feasibility and ratio audit of a stored allocation")
    v.add_argument("--instance", required=True, metavar="PATH")
    v.add_argument("--alloc", required=True, metavar="PATH")
    return ap


def _spec(args: argparse.Namespace, pipeline: str) -> ExperimentSpec:
    return ExperimentSpec(
        pipeline=Pipeline(pipeline),
        gen=parse_gen_spec(args.gen) if args.gen else None,
        instance_path=args.instance,
        epsilon=args.eps,
        alpha=args.alpha,
        tau=args.tau,
        copies=args.copies,
        seed=args.seed,
        lambda_guess=args.lambda_guess,
        max_iterations=args.max_iterations,
        out=getattr(args, "out", None),
        trace=getattr(args, "trace", None),
    )


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load(args: argparse.Namespace):
    return generate(parse_gen_spec(args.gen)) if getattr(args, "gen", None) else read_instance(args.instance)


def _dispatch(args: argparse.Namespace) -> int:
    cmd = args.command
    if cmd == "generate":
        _emit(format_instance(generate(parse_gen_spec(args.gen))), args.out)
        return EXIT_OK
    if cmd in ("run", "boost"):
        spec = _spec(args, args.pipeline if cmd == "run" else "boost")
        result = run_experiment(spec)
        if not spec.out:
            sys.stdout.write(report_json(result.report))
        if args.alloc_out and result.allocation is not None:
            write_allocation(result.instance, result.allocation, args.alloc_out)
        return EXIT_OK if result.feasible else EXIT_INFEASIBLE
    if cmd == "sweep":
        header, rows = sweep(_spec(args, args.pipeline), parse_grid(args.vary or ["seed=" + str(args.seed)]))
        _emit(sweep_csv(header, rows), args.out)
        feasible_col = header.index("feasible")
        return EXIT_OK if all(r[feasible_col] for r in rows) else EXIT_INFEASIBLE
    if cmd == "oracle":
        instance = _load(args)
        res = opt_flow(instance)
        sys.stdout.write(f"{res.opt_size}\n")
        if args.alloc_out:
            write_allocation(instance, res.witness, args.alloc_out)
        return EXIT_OK
    if cmd == "round":
        instance = read_instance(args.instance)
        frac = read_allocation(instance, args.alloc)
        if not isinstance(frac, FractionalAllocation):
            raise MalformedInstance("round expects a fractional allocation file")
        copies = default_copies(instance.n) if args.copies is None else args.copies
        if copies < 1:
            raise InvalidConfig("copies must be >= 1")
        got = round_best_of(instance, frac, copies, seed=args.seed)
        _emit(format_allocation(instance, got), args.out)
        return EXIT_OK if validate_integral(instance, got) else EXIT_INFEASIBLE
    if cmd == "verify":
        instance = read_instance(args.instance)
        rep = audit(instance, read_allocation(instance, args.alloc))
        sys.stdout.write(report_json(rep))
        return EXIT_OK if rep["feasible"] else EXIT_INFEASIBLE
    raise AssertionError(cmd)


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except MalformedInstance as exc:
        print(f"malformed input: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except InvalidConfig as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
