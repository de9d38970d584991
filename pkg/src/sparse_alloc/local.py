"""The proportional-allocation iteration on the LOCAL model.

Each right vertex ``v`` carries a priority ``beta_v = (1+eps)**j`` stored as
the integer exponent ``j``. In every round each left vertex splits one unit
of demand over its neighbours proportionally to their priorities; each right
vertex then raises its priority when under-allocated and lowers it when
over-allocated. With ``threshold_schedule`` the thresholds become
``C_v / (1 + k eps)`` and ``C_v (1 + k eps)`` for per-vertex, per-round
factors ``k``; the all-ones schedule is the plain iteration bit for bit.

Per-round sums are sequential reductions in edge order (``np.bincount``);
since edges are sorted by ``(u, v)`` this sums every neighbourhood in
ascending vertex id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .graph import AllocationInstance, FractionalAllocation, InvalidConfig

__all__ = [
    "EngineConfig",
    "PriorityState",
    "LevelSetView",
    "RoundStats",
    "LocalEngine",
    "AutoTermResult",
    "power",
    "beta_table",
    "default_tau",
    "high_accuracy_tau",
    "round_bound",
    "fractions",
    "run_rounds",
    "finalize",
    "level_sets",
    "termination_check",
    "run_until_terminated",
    "match_weight",
]


def power(base: float, j: int) -> float:
    """``base**j`` by binary exponentiation; negative ``j`` via reciprocal."""
    e = abs(j)
    result = 1.0
    b = base
    while e:
        if e & 1:
            result *= b
        b *= b
        e >>= 1
    return result if j >= 0 else 1.0 / result


def beta_table(epsilon: float, radius: int) -> np.ndarray:
    """Priorities for exponents ``-radius..radius``; index ``j + radius``."""
    base = 1.0 + epsilon
    return np.array([power(base, j) for j in range(-radius, radius + 1)])


def round_bound(lam: int, epsilon: float) -> int:
    """``ceil(log_{1+eps}(4 lam / eps)) + 1``."""
    return math.ceil(math.log(4.0 * lam / epsilon) / math.log1p(epsilon)) + 1


default_tau = round_bound


def high_accuracy_tau(right_count: int, epsilon: float) -> int:
    """``ceil(2 ln(2|R|/eps) / eps^2) + ceil(1/eps)`` rounds."""
    return math.ceil(2.0 * math.log(2.0 * right_count / epsilon) / epsilon**2) + math.ceil(
        1.0 / epsilon
    )


@dataclass(frozen=True)
class EngineConfig:
    epsilon: float
    tau: int
    threshold_schedule: np.ndarray | None = None
    """Optional ``(tau, |R|)`` array; row ``r-1`` holds the factors of round ``r``."""

    def __post_init__(self) -> None:
        if not (0.0 < self.epsilon <= 1.0):
            raise InvalidConfig(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.tau < 1:
            raise InvalidConfig(f"tau must be >= 1, got {self.tau}")
        sched = self.threshold_schedule
        if sched is not None:
            sched = np.asarray(sched, dtype=np.float64)
            if sched.ndim != 2 or sched.shape[0] < self.tau:
                raise InvalidConfig("threshold_schedule must have shape (tau, |R|)")
            if np.any(sched <= 0.0) or not np.all(np.isfinite(sched)):
                raise InvalidConfig("threshold factors must be positive and finite")
            k_max = self.k_max if sched.size else 1.0
            if np.any(sched != 1.0) and self.epsilon > 1.0 / k_max + 1e-12:
                raise InvalidConfig(
                    f"epsilon={self.epsilon} exceeds 1/k={1.0 / k_max} for this schedule"
                )
            object.__setattr__(self, "threshold_schedule", sched)

    @property
    def k_max(self) -> float:
        """Smallest ``k`` with every factor in ``[1/k, k]``."""
        sched = self.threshold_schedule
        if sched is None or sched.size == 0:
            return 1.0
        return float(max(np.max(sched), 1.0 / np.min(sched), 1.0))


@dataclass
class PriorityState:
    """Exponents and the last computed fractions.

    Arrays over R are indexed by R offset (``v - left_count``); ``x_cache`` is
    indexed by edge. ``alloc`` and ``x_cache`` come from the last completed
    round and are computed from the exponents *before* that round's update.
    """

    exponent: np.ndarray
    round: int = 0
    alloc: np.ndarray = field(default_factory=lambda: np.zeros(0))
    x_cache: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def fresh(cls, instance: AllocationInstance) -> PriorityState:
        return cls(
            exponent=np.zeros(instance.right_count, dtype=np.int64),
            round=0,
            alloc=np.zeros(instance.right_count),
            x_cache=np.zeros(instance.m),
        )

    def copy(self) -> PriorityState:
        return PriorityState(
            self.exponent.copy(), self.round, self.alloc.copy(), self.x_cache.copy()
        )


@dataclass(frozen=True)
class LevelSetView:
    levels: dict[int, frozenset[int]]
    top: frozenset[int]
    bottom: frozenset[int]
    top_neighborhood: frozenset[int]


class RoundStats(NamedTuple):
    round: int
    num_increased: int
    num_decreased: int
    match_weight: float
    top_size: int
    bottom_size: int
    top_nbhd_size: int


def fractions(
    instance: AllocationInstance, beta: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Proportional split for priorities ``beta`` (indexed by R offset).

    Returns ``(x, alloc, denom)``: per-edge fractions, per-R-vertex load and
    the per-left-vertex priority sums. Isolated left vertices get ``denom=0``
    and own no edges.
    """
    eu, ev = instance.edge_left, instance.edge_right
    bv = beta[ev]
    denom = np.bincount(eu, weights=bv, minlength=instance.left_count)
    x = bv / denom[eu] if instance.m else np.zeros(0)
    alloc = np.bincount(ev, weights=x, minlength=instance.right_count)
    return x, alloc, denom


def step_exponents(
    exponent: np.ndarray,
    alloc: np.ndarray,
    capacity: np.ndarray,
    epsilon: float,
    k: np.ndarray | float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive threshold rule; returns (increase mask, decrease mask)."""
    slack = 1.0 + k * epsilon
    inc = alloc <= capacity / slack
    dec = alloc >= capacity * slack
    exponent += inc.astype(np.int64) - dec.astype(np.int64)
    return inc, dec


class LocalEngine:
    """Stepwise driver; ``run_rounds`` and ``run_until_terminated`` wrap it."""

    def __init__(
        self,
        instance: AllocationInstance,
        epsilon: float,
        threshold_schedule: np.ndarray | None = None,
        max_rounds: int | None = None,
    ) -> None:
        if not (0.0 < epsilon <= 1.0):
            raise InvalidConfig(f"epsilon must lie in (0, 1], got {epsilon}")
        self.instance = instance
        self.epsilon = epsilon
        self.schedule = threshold_schedule
        self.state = PriorityState.fresh(instance)
        self._radius = max(1, max_rounds or 64)
        self._table = beta_table(epsilon, self._radius)
        self.history: list[np.ndarray] = []
        self.last_step: tuple[np.ndarray, np.ndarray] | None = None

    def beta(self, exponent: np.ndarray | None = None) -> np.ndarray:
        exp = self.state.exponent if exponent is None else exponent
        if exp.size and int(np.max(np.abs(exp))) > self._radius:
            self._radius = max(2 * self._radius, int(np.max(np.abs(exp))))
            self._table = beta_table(self.epsilon, self._radius)
        return self._table[exp + self._radius]

    def step(self) -> PriorityState:
        st = self.state
        r = st.round + 1
        x, alloc, _ = fractions(self.instance, self.beta())
        if self.schedule is None:
            k: np.ndarray | float = 1.0
        else:
            k = self.schedule[r - 1]
        self.last_step = step_exponents(
            st.exponent, alloc, self.instance.capacity_array, self.epsilon, k
        )
        st.round = r
        st.alloc = alloc
        st.x_cache = x
        self.history.append(st.exponent.copy())
        return st

    def stats(self) -> RoundStats:
        st = self.state
        view = level_sets(self.instance, st)
        inc, dec = self.last_step if self.last_step else (np.zeros(0), np.zeros(0))
        return RoundStats(
            st.round,
            int(np.sum(inc)),
            int(np.sum(dec)),
            match_weight(self.instance, st),
            len(view.top),
            len(view.bottom),
            len(view.top_neighborhood),
        )


def run_rounds(
    instance: AllocationInstance,
    config: EngineConfig,
    history: list[np.ndarray] | None = None,
    trace: list[RoundStats] | None = None,
) -> PriorityState:
    """Run ``config.tau`` rounds and return the final state.

    When given, ``history`` receives a copy of the exponent vector after each
    round and ``trace`` one :class:`RoundStats` row per round.
    """
    engine = LocalEngine(
        instance, config.epsilon, config.threshold_schedule, max_rounds=config.tau
    )
    for _ in range(config.tau):
        engine.step()
        if trace is not None:
            trace.append(engine.stats())
    if history is not None:
        history.extend(engine.history)
    return engine.state


def finalize(instance: AllocationInstance, state: PriorityState) -> FractionalAllocation:
    """Scale the fractions of every over-allocated vertex down to its capacity."""
    if instance.m == 0:
        return FractionalAllocation.zeros(0)
    cap = instance.capacity_array
    alloc = state.alloc
    over = alloc > cap
    scale = np.ones_like(alloc)
    scale[over] = cap[over] / alloc[over]
    ev = instance.edge_right
    x = np.where(over[ev], scale[ev] * state.x_cache, state.x_cache)
    return FractionalAllocation.from_values(x)


def match_weight(instance: AllocationInstance, state: PriorityState) -> float:
    """``sum_v min(C_v, alloc_v)``."""
    return float(np.sum(np.minimum(instance.capacity_array, state.alloc)))


def level_sets(instance: AllocationInstance, state: PriorityState) -> LevelSetView:
    """Partition R by exponent; top is exponent ``+round``, bottom ``-round``.

    Vertex ids in the view are global ids.
    """
    r = state.round
    off = instance.left_count
    levels: dict[int, list[int]] = {}
    for j, e in enumerate(state.exponent.tolist()):
        levels.setdefault(e, []).append(off + j)
    top = frozenset(levels.get(r, ()))
    bottom = frozenset(levels.get(-r, ())) if r > 0 else frozenset()
    if r == 0:
        # a fresh state is a single level; count it as top only
        bottom = frozenset()
    nbhd: set[int] = set()
    for v in top:
        for e in instance.right_edges[v - off]:
            nbhd.add(instance.edges[e][0])
    return LevelSetView(
        {k: frozenset(v) for k, v in sorted(levels.items())},
        top,
        bottom,
        frozenset(nbhd),
    )


def termination_check(
    instance: AllocationInstance, state: PriorityState, epsilon: float
) -> bool:
    """True iff ``|N(top)| <= |bottom|`` or load outside bottom covers ``(1-eps/2)|N(top)|``."""
    view = level_sets(instance, state)
    n_top = len(view.top_neighborhood)
    if n_top <= len(view.bottom):
        return True
    off = instance.left_count
    mask = np.ones(instance.right_count, dtype=bool)
    for v in view.bottom:
        mask[v - off] = False
    outside = float(np.sum(state.alloc[mask]))
    return outside >= (1.0 - epsilon / 2.0) * n_top


class AutoTermResult(NamedTuple):
    state: PriorityState
    allocation: FractionalAllocation
    rounds_used: int
    budget_exhausted: bool


def run_until_terminated(
    instance: AllocationInstance,
    epsilon: float,
    max_rounds: int,
    trace: list[RoundStats] | None = None,
) -> AutoTermResult:
    """Iterate until :func:`termination_check` fires or ``max_rounds`` is spent."""
    if max_rounds < 1:
        raise InvalidConfig("max_rounds must be >= 1")
    engine = LocalEngine(instance, epsilon, max_rounds=max_rounds)
    fired = False
    while engine.state.round < max_rounds:
        engine.step()
        if trace is not None:
            trace.append(engine.stats())
        if termination_check(instance, engine.state, epsilon):
            fired = True
            break
    st = engine.state
    return AutoTermResult(st, finalize(instance, st), st.round, not fired)
