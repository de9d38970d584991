"""Fractional and integral allocations on sparse bipartite graphs.

Left vertices take at most one unit, right vertex ``v`` at most ``C_v``.
The package provides the proportional-priority iteration (LOCAL and a
sampled MPC simulation), randomized rounding, augmentation toward
``1+eps``, exact oracles and an experiment harness.
"""

from .boosting import boost
from .generators import CapacityRule, GenKind, GenSpec, gen_star, generate, parse_gen_spec
from .graph import (
    AllocationError,
    AllocationInstance,
    FractionalAllocation,
    IntegralAllocation,
    InvalidConfig,
    MalformedInstance,
    build_instance,
    degeneracy,
    read_instance,
    validate_fractional,
    validate_integral,
    write_instance,
)
from .local import (
    EngineConfig,
    LocalEngine,
    finalize,
    high_accuracy_tau,
    level_sets,
    round_bound,
    run_rounds,
    run_until_terminated,
    termination_check,
)
from .mpc import run_mpc, run_mpc_with_guessing, simulate_mpc
from .oracle import opt_brute, opt_flow
from .rounding import round_best_of, round_once

__version__ = "0.1.0"

__all__ = [
    "AllocationError",
    "AllocationInstance",
    "CapacityRule",
    "EngineConfig",
    "FractionalAllocation",
    "GenKind",
    "GenSpec",
    "IntegralAllocation",
    "InvalidConfig",
    "LocalEngine",
    "MalformedInstance",
    "boost",
    "build_instance",
    "degeneracy",
    "finalize",
    "gen_star",
    "generate",
    "high_accuracy_tau",
    "level_sets",
    "opt_brute",
    "opt_flow",
    "parse_gen_spec",
    "read_instance",
    "round_best_of",
    "round_bound",
    "round_once",
    "run_mpc",
    "run_mpc_with_guessing",
    "run_rounds",
    "run_until_terminated",
    "simulate_mpc",
    "termination_check",
    "validate_fractional",
    "validate_integral",
    "write_instance",
]
