"""Sampled, phase-compressed simulation of the proportional iteration in MPC.

Rounds are grouped into phases of ``B`` rounds. At the start of a phase every
vertex splits its neighbourhood into groups of similar priority and reserves,
for each round of the phase, an independent sample of ``t`` neighbours per
group (drawn with replacement). Inside the phase left priorities ``beta_u``
and right loads are estimated from those samples only; groups with at most
``t`` members are summed exactly. Machines, balls and graph exponentiation
are not materialized: an accountant charges their round cost analytically
and measures sampled-ball volumes on a small vertex sample.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .graph import AllocationInstance, FractionalAllocation, InvalidConfig
from .local import (
    PriorityState,
    beta_table,
    fractions,
    round_bound,
    step_exponents,
    termination_check,
)
from .rng import stream

__all__ = [
    "MpcConfig",
    "MpcCostReport",
    "MpcPhaseState",
    "MpcRoundRecord",
    "MpcRun",
    "GuessExhausted",
    "compute_B",
    "sample_count",
    "estimate_group_sum",
    "sampled_sum",
    "run_mpc_phase",
    "simulate_mpc",
    "run_mpc",
    "run_mpc_with_guessing",
    "guess_schedule",
    "derive_schedule",
]

EPS_SHRINK = 48.0
BALL_SAMPLE_FRACTION = 0.01
LEFT, RIGHT = 0, 1


class GuessExhausted(UserWarning):
    """The arboricity guess outgrew ``n``; the run fell back to ``lambda = n``."""


def compute_B(n: int, lambda_guess: float, epsilon: float, alpha: float) -> int:
    """Rounds per phase: ``floor(min(sqrt(alpha log n), sqrt(log lambda)) / sqrt(8 eps'))``, ``eps' = eps/48``."""
    if n < 2:
        raise InvalidConfig("n must be >= 2")
    if not lambda_guess > 1:
        raise InvalidConfig("lambda_guess must exceed 1")
    _check_eps_alpha(epsilon, alpha)
    eps = epsilon / EPS_SHRINK
    memory = math.sqrt(alpha * math.log2(n) / (8.0 * eps))
    sparsity = math.sqrt(math.log2(lambda_guess) / (8.0 * eps))
    return max(1, math.floor(min(memory, sparsity) + 1e-9))


def sample_count(B: int, epsilon: float, n: int) -> int:
    """``ceil((1+eps)^(2B) * eps^-5 * log2 n)`` samples per group and round."""
    return max(1, math.ceil((1.0 + epsilon) ** (2 * B) * epsilon**-5 * math.log2(max(n, 2))))


def _check_eps_alpha(epsilon: float, alpha: float) -> None:
    if not 0.0 < epsilon <= 0.25:
        raise InvalidConfig(f"epsilon must lie in (0, 1/4], got {epsilon}")
    if not 0.0 < alpha < 1.0:
        raise InvalidConfig(f"alpha must lie in (0, 1), got {alpha}")


def _rescaled_sum(values: np.ndarray, picks: np.ndarray) -> float:
    return len(values) / len(picks) * float(np.sum(values[picks]))


def estimate_group_sum(values, t: int, rng: np.random.Generator) -> float:
    """Exact sum for at most ``t`` values, else ``(len/t) * sum`` of ``t`` draws with replacement."""
    arr = np.asarray(values, dtype=np.float64)
    if len(arr) <= t:
        return math.fsum(arr.tolist())
    return sampled_sum(arr, t, rng)


def sampled_sum(values, s: int, rng: np.random.Generator) -> float:
    """``(len/s) * sum`` of ``s`` uniform draws with replacement, whatever the length."""
    arr = np.asarray(values, dtype=np.float64)
    if s < 1:
        raise InvalidConfig("sample size must be >= 1")
    return _rescaled_sum(arr, rng.integers(0, len(arr), size=s))


@dataclass(frozen=True)
class MpcConfig:
    epsilon: float
    alpha: float
    lambda_guess: float
    B: int
    t: int
    seed: int = 0

    def __post_init__(self) -> None:
        _check_eps_alpha(self.epsilon, self.alpha)
        if self.B < 1 or self.t < 1:
            raise InvalidConfig("B and t must be >= 1")

    @classmethod
    def derive(
        cls, n: int, epsilon: float, alpha: float, lambda_guess: float, seed: int = 0
    ) -> MpcConfig:
        B = compute_B(max(n, 2), max(lambda_guess, 2), epsilon, alpha)
        return cls(epsilon, alpha, lambda_guess, B, sample_count(B, epsilon, n), seed)


@dataclass
class MpcCostReport:
    mpc_rounds: int = 0
    phases: int = 0
    max_ball_volume: int = 0
    total_memory_words: int = 0
    per_machine_bound: int = 0
    guess_exhausted: bool = False

    def absorb(self, other: MpcCostReport) -> None:
        self.mpc_rounds += other.mpc_rounds
        self.phases += other.phases
        self.max_ball_volume = max(self.max_ball_volume, other.max_ball_volume)
        self.total_memory_words = max(self.total_memory_words, other.total_memory_words)
        self.per_machine_bound = max(self.per_machine_bound, other.per_machine_bound)
        self.guess_exhausted |= other.guess_exhausted


@dataclass
class _SampledGroup:
    side: int
    vertex: int
    group: int
    members: np.ndarray  # edge indices, ascending
    picks: list[np.ndarray] = field(default_factory=list)  # per round offset


@dataclass
class MpcPhaseState:
    """Live state between phases.

    ``exponent``, ``est_alloc`` are indexed by R offset, ``beta_left`` by left
    vertex. ``left_group``/``right_group`` give, per edge, the group of the
    edge inside its left/right endpoint's neighbourhood for the current
    phase; ``reserved_samples`` lists the groups that exceed ``t``.
    """

    exponent: np.ndarray
    beta_left: np.ndarray
    round: int = 0
    phase: int = 0
    est_alloc: np.ndarray = field(default_factory=lambda: np.zeros(0))
    exact_alloc: np.ndarray = field(default_factory=lambda: np.zeros(0))
    x_exact: np.ndarray = field(default_factory=lambda: np.zeros(0))
    left_group: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    right_group: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    reserved_samples: list[_SampledGroup] = field(default_factory=list)
    cost: MpcCostReport = field(default_factory=MpcCostReport)

    @classmethod
    def initial(cls, instance: AllocationInstance) -> MpcPhaseState:
        _, alloc, denom = fractions(instance, np.ones(instance.right_count))
        return cls(
            exponent=np.zeros(instance.right_count, dtype=np.int64),
            beta_left=denom,
            est_alloc=np.zeros(instance.right_count),
            exact_alloc=np.zeros(instance.right_count),
            x_exact=np.zeros(instance.m),
        )


@dataclass(frozen=True)
class MpcRoundRecord:
    round: int
    est_alloc: np.ndarray
    exact_alloc: np.ndarray
    increased: np.ndarray
    decreased: np.ndarray
    exponent: np.ndarray  # after the update


def _levels(values: np.ndarray, epsilon: float, tau: int) -> np.ndarray:
    """Group index ``x`` with ``value in ((1+eps)^(x-1), (1+eps)^x]``, clamped to ``[-2tau, 2tau]``."""
    with np.errstate(divide="ignore"):
        raw = np.ceil(np.log(values) / math.log1p(epsilon) - 1e-9)
    raw = np.nan_to_num(raw, nan=-2 * tau, neginf=-2 * tau, posinf=2 * tau)
    return np.clip(raw, -2 * tau, 2 * tau).astype(np.int64)


def _partition(
    instance: AllocationInstance, state: MpcPhaseState, epsilon: float, tau: int
) -> None:
    """Recompute per-edge group ids from the phase-start priorities."""
    eu, ev = instance.edge_left, instance.edge_right
    # a left vertex groups its right neighbours by their exponent
    state.left_group = np.clip(state.exponent[ev], -2 * tau, 2 * tau)
    # a right vertex groups its left neighbours by the level of beta_u
    state.right_group = _levels(state.beta_left, epsilon, tau)[eu]


def _reserve(
    instance: AllocationInstance,
    state: MpcPhaseState,
    config: MpcConfig,
    tau: int,
    offsets: int,
) -> None:
    state.reserved_samples = []
    width = 4 * tau + 1
    for side, owner, group in (
        (LEFT, instance.edge_left, state.left_group),
        (RIGHT, instance.edge_right, state.right_group),
    ):
        if instance.m == 0:
            continue
        key = owner * width + (group + 2 * tau)
        uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
        for gi in np.flatnonzero(counts > config.t).tolist():
            members = np.flatnonzero(inverse == gi)
            vertex, gid = divmod(int(uniq[gi]), width)
            sg = _SampledGroup(side, vertex, gid - 2 * tau, members)
            for r in range(offsets):
                rng = stream(config.seed, state.phase, r, side, vertex, gid)
                sg.picks.append(rng.integers(0, len(members), size=config.t))
            state.reserved_samples.append(sg)


def _sampled_masks(instance: AllocationInstance, state: MpcPhaseState) -> tuple[np.ndarray, np.ndarray]:
    exact_left = np.ones(instance.m)
    exact_right = np.ones(instance.m)
    for sg in state.reserved_samples:
        (exact_left if sg.side == LEFT else exact_right)[sg.members] = 0.0
    return exact_left, exact_right


def _ball_volume(
    instance: AllocationInstance,
    state: MpcPhaseState,
    config: MpcConfig,
    radius: int,
) -> tuple[int, int]:
    """Largest and mean radius-``radius`` ball in the offset-0 sampled graph, over ~1% of vertices."""
    n = instance.n
    if n == 0:
        return 0, 0
    keep = np.zeros(instance.m, dtype=bool)
    exact_left, exact_right = _sampled_masks(instance, state)
    keep |= (exact_left > 0) | (exact_right > 0)
    for sg in state.reserved_samples:
        if sg.picks:
            keep[sg.members[sg.picks[0]]] = True
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(instance.edges[i] for i in np.flatnonzero(keep).tolist())
    rng = stream(config.seed, state.phase, 1 << 20)
    k = max(1, math.ceil(BALL_SAMPLE_FRACTION * n))
    roots = rng.choice(n, size=min(k, n), replace=False)
    sizes = [len(nx.single_source_shortest_path_length(g, int(w), cutoff=radius)) for w in roots]
    return max(sizes), round(sum(sizes) / len(sizes) * n)


def run_mpc_phase(
    instance: AllocationInstance,
    state: MpcPhaseState,
    config: MpcConfig,
    tau: int,
    records: list[MpcRoundRecord] | None = None,
) -> MpcPhaseState:
    """Simulate one phase: regroup, reserve samples, run up to ``B`` estimated rounds."""
    eps = config.epsilon
    offsets = min(config.B, tau - state.round)
    if offsets <= 0:
        return state
    _partition(instance, state, eps, tau)
    _reserve(instance, state, config, tau, offsets)
    exact_left, exact_right = _sampled_masks(instance, state)
    table = beta_table(eps, tau)
    eu, ev = instance.edge_left, instance.edge_right
    cap = instance.capacity_array

    ball_max, memory = _ball_volume(instance, state, config, offsets)
    cost = state.cost
    cost.phases += 1
    cost.mpc_rounds += 1 + math.ceil(math.log2(offsets))
    cost.max_ball_volume = max(cost.max_ball_volume, ball_max)
    cost.total_memory_words = max(cost.total_memory_words, memory + instance.m)

    for r in range(offsets):
        beta = table[state.exponent + tau]
        terms = beta[ev]
        bu = np.bincount(eu, weights=terms * exact_left, minlength=instance.left_count)
        for sg in state.reserved_samples:
            if sg.side == LEFT:
                bu[sg.vertex] += _rescaled_sum(terms[sg.members], sg.picks[r])
        x_est = terms / bu[eu] if instance.m else np.zeros(0)
        est = np.bincount(ev, weights=x_est * exact_right, minlength=instance.right_count)
        for sg in state.reserved_samples:
            if sg.side == RIGHT:
                est[sg.vertex] += _rescaled_sum(x_est[sg.members], sg.picks[r])
        x_exact, exact, _ = fractions(instance, beta)
        inc, dec = step_exponents(state.exponent, est, cap, eps)
        state.round += 1
        state.beta_left = bu
        state.est_alloc = est
        state.exact_alloc = exact
        state.x_exact = x_exact
        if records is not None:
            records.append(
                MpcRoundRecord(state.round, est, exact, inc, dec, state.exponent.copy())
            )
    state.phase += 1
    return state


@dataclass
class MpcRun:
    allocation: FractionalAllocation
    cost: MpcCostReport
    state: MpcPhaseState
    config: MpcConfig
    tau: int
    records: list[MpcRoundRecord]


def simulate_mpc(
    instance: AllocationInstance,
    epsilon: float,
    alpha: float,
    lambda_guess: float,
    seed: int = 0,
    *,
    tau: int | None = None,
    B: int | None = None,
    t: int | None = None,
    record: bool = False,
) -> MpcRun:
    """Full run with optional overrides of ``tau``, ``B`` and ``t``."""
    base = MpcConfig.derive(instance.n, epsilon, alpha, lambda_guess, seed)
    config = MpcConfig(
        epsilon,
        alpha,
        lambda_guess,
        base.B if B is None else B,
        base.t if t is None else t,
        seed,
    )
    if tau is None:
        tau = round_bound(max(1, math.ceil(lambda_guess)), epsilon)
    state = MpcPhaseState.initial(instance)
    state.cost.per_machine_bound = math.ceil(max(instance.n, 1) ** alpha)
    records: list[MpcRoundRecord] = []
    while state.round < tau:
        run_mpc_phase(instance, state, config, tau, records if record else None)
    state.cost.mpc_rounds += 1  # final per-edge output
    return MpcRun(_emit(instance, state), state.cost, state, config, tau, records)


def _emit(instance: AllocationInstance, state: MpcPhaseState) -> FractionalAllocation:
    """Per-edge ``min(1, C_v / est_alloc_v) * beta_v / beta_u`` from exact last-round priorities, then a feasibility rescale."""
    if instance.m == 0:
        return FractionalAllocation.zeros(0)
    eu, ev = instance.edge_left, instance.edge_right
    cap = instance.capacity_array
    est = state.est_alloc
    scale = np.ones_like(est)
    pos = est > 0
    scale[pos] = np.minimum(1.0, cap[pos] / est[pos])
    x = scale[ev] * state.x_exact
    load = np.bincount(ev, weights=x, minlength=instance.right_count)
    over = load > cap
    if np.any(over):
        fix = np.ones_like(load)
        fix[over] = cap[over] / load[over]
        x = np.where(over[ev], x * fix[ev], x)
    left = np.bincount(eu, weights=x, minlength=instance.left_count)
    if np.any(left > 1.0):
        fix = np.where(left > 1.0, 1.0 / np.where(left > 0, left, 1.0), 1.0)
        x = x * fix[eu]
    return FractionalAllocation.from_values(x)


def run_mpc(
    instance: AllocationInstance,
    epsilon: float,
    alpha: float,
    lambda_guess: float,
    seed: int = 0,
) -> tuple[FractionalAllocation, MpcCostReport]:
    run = simulate_mpc(instance, epsilon, alpha, lambda_guess, seed)
    return run.allocation, run.cost


def guess_schedule(n: int) -> list[tuple[int, bool]]:
    """Arboricity guesses ``2^(4^i)`` for ``i = 1, 2, ...``.

    Each item is ``(lambda, final)``. The first guess is always tried; a later
    guess above ``n`` is replaced by ``n`` and ends the schedule, as does any
    guess already at least ``n``.
    """
    out: list[tuple[int, bool]] = []
    cap = max(n, 2)
    i = 1
    while True:
        lam = 2 ** (4**i)
        if i > 1 and lam > cap:
            lam = cap
        final = lam >= cap
        out.append((lam, final))
        if final:
            return out
        i += 1


def run_mpc_with_guessing(
    instance: AllocationInstance,
    epsilon: float,
    alpha: float,
    seed: int = 0,
    runs: list[MpcRun] | None = None,
) -> tuple[FractionalAllocation, MpcCostReport, int]:
    """Try growing arboricity guesses until the termination test passes on exact loads.

    The test costs two charged rounds per guess. If it still fails on the
    final guess (one at least ``n``), that run is returned and
    ``guess_exhausted`` is set.
    """
    total = MpcCostReport()
    total.per_machine_bound = math.ceil(max(instance.n, 1) ** alpha)
    for i, (lam, final) in enumerate(guess_schedule(instance.n)):
        run = simulate_mpc(instance, epsilon, alpha, lam, seed=_guess_seed(seed, i))
        if runs is not None:
            runs.append(run)
        total.absorb(run.cost)
        total.mpc_rounds += 2
        st = run.state
        probe = PriorityState(st.exponent, st.round, st.exact_alloc, st.x_exact)
        if termination_check(instance, probe, epsilon):
            return run.allocation, total, lam
        if final:
            total.guess_exhausted = True
            warnings.warn(
                f"termination test failed up to lambda = n = {lam}", GuessExhausted, stacklevel=2
            )
            return run.allocation, total, lam
    raise AssertionError("unreachable")


def _guess_seed(seed: int, i: int) -> int:
    return (int(seed) * 1_000_003 + i) & ((1 << 64) - 1)


def derive_schedule(
    records: list[MpcRoundRecord], capacity: np.ndarray
) -> np.ndarray:
    """Per-vertex, per-round threshold factors that replay an MPC trajectory exactly.

    Case analysis on the exact load: when it is at most ``2 C_v`` the factor is
    1/4, 1/2 or 3 for an increase, decrease or no change of the MPC priority;
    above ``2 C_v`` it is 1. Row ``r-1`` belongs to round ``r``.
    """
    if not records:
        return np.ones((0, len(capacity)))
    rows = []
    for rec in records:
        k = np.full(len(capacity), 3.0)
        k[rec.increased] = 0.25
        k[rec.decreased] = 0.5
        k[rec.exact_alloc > 2.0 * capacity] = 1.0
        rows.append(k)
    return np.vstack(rows)
