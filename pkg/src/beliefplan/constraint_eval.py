"""Inner-constraint indicators, two-layer bounds, and the adaptive verdict loop.

A candidate action sequence must satisfy an inner condition on its
belief-dependent return for at least a ``1 - epsilon`` fraction of the ``m``
observation laces. Two bound layers let the loop decide early: layer 1 counts
only expanded laces (undecided laces contribute slack of ``1/m`` each), layer
2 replaces each lace's exact indicator by indicator bounds computed from
per-step gain bounds, which are sound in both directions. The loop expands
laces and tightens simplification levels until the lower bound certifies
feasibility or the upper bound certifies violation; at full expansion and
exact bounds it always decides, so the verdict equals the brute-force one.
"""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field
from typing import Protocol, Sequence


class Form(str, enum.Enum):
    """Inner-constraint form: sum of gains (strict >) or every gain (non-strict >=)."""

    CUMULATIVE = "cumulative"
    MULTIPLICATIVE = "multiplicative"


@dataclass(frozen=True)
class ConstraintSpec:
    """User-supplied inner threshold and outer confidence level."""

    form: Form
    delta: float
    epsilon: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "form", Form(self.form))
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")

    def at_delta(self, delta: float) -> "ConstraintSpec":
        return ConstraintSpec(form=self.form, delta=delta, epsilon=self.epsilon)


class Status(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNKNOWN = "unknown"


# The outer comparison `fraction >= 1 - epsilon` is closed; bound fractions
# are exact multiples of 1/m while 1 - epsilon is rounded, so equality at the
# boundary (epsilon = k/m) needs an absolute tolerance far below 1/m.
_OUTER_TOL = 1e-12


def fraction_satisfies(fraction: float, epsilon: float) -> bool:
    """Outer-constraint comparison with its boundary tolerance."""
    return fraction >= (1.0 - epsilon) - _OUTER_TOL


@dataclass(frozen=True)
class Verdict:
    """Outcome of a feasibility check with its bound witness."""

    status: Status
    lb: float
    ub: float
    laces_expanded: int


def inner_indicator(per_step_values: Sequence[float], spec: ConstraintSpec) -> int:
    """Exact inner-constraint indicator for one lace.

    The cumulative form compares the summed gains strictly against delta;
    the multiplicative form requires every step gain to reach delta
    (non-strict). The asymmetry is deliberate and preserved everywhere.
    """
    if spec.form is Form.CUMULATIVE:
        return int(sum(per_step_values) > spec.delta)
    return int(all(value >= spec.delta for value in per_step_values))


def inner_indicator_bounds(
    per_step_bound_pairs: Sequence[tuple[float, float]], spec: ConstraintSpec
) -> tuple[int, int]:
    """Indicator sandwich from per-step gain bounds.

    Applying the indicator to all-lower values can only miss satisfied laces,
    and to all-upper values can only miss violated ones, so
    ``c_lower <= c_exact <= c_upper`` for either form.
    """
    lowers = [lo for lo, _ in per_step_bound_pairs]
    uppers = [hi for _, hi in per_step_bound_pairs]
    return inner_indicator(lowers, spec), inner_indicator(uppers, spec)


@dataclass
class BoundState:
    """Accumulators for one action's probabilistic-constraint bounds.

    Each expanded lace contributes its indicator-bound pair; unexpanded laces
    contribute 1/m of slack to the upper bound only. The counts are kept
    incrementally so a bound query is O(1).
    """

    m: int
    pairs: list[tuple[int, int]] = field(default_factory=list)
    count_lower: int = 0
    count_upper_ones: int = 0

    @property
    def m_expanded(self) -> int:
        return len(self.pairs)

    def add_lace(self, pair: tuple[int, int]) -> None:
        if self.m_expanded >= self.m:
            raise ValueError("lace budget exhausted")
        self.pairs.append(pair)
        self.count_lower += pair[0]
        self.count_upper_ones += pair[1]

    def replace_lace(self, idx: int, pair: tuple[int, int]) -> None:
        old = self.pairs[idx]
        self.pairs[idx] = pair
        self.count_lower += pair[0] - old[0]
        self.count_upper_ones += pair[1] - old[1]


def layer_bounds(state: BoundState) -> tuple[float, float]:
    """Merged two-layer bounds on the satisfied-lace fraction.

    ``lb = count_lower / m`` and ``ub = (m - m_expanded)/m + count_upper/m``;
    with every expanded lace exact these coincide with the pure lace-count
    bounds, and at full exact expansion both equal the sample fraction.
    """
    lb = state.count_lower / state.m
    ub = (state.m - state.m_expanded) / state.m + state.count_upper_ones / state.m
    return lb, ub


def merged_check(state: BoundState, spec: ConstraintSpec) -> Verdict:
    """Feasible when the lower bound clears ``1 - epsilon``, else infeasible when
    the upper bound falls short; the lower check runs first."""
    lb, ub = layer_bounds(state)
    if fraction_satisfies(lb, spec.epsilon):
        status = Status.FEASIBLE
    elif not fraction_satisfies(ub, spec.epsilon):
        status = Status.INFEASIBLE
    else:
        status = Status.UNKNOWN
    return Verdict(status=status, lb=lb, ub=ub, laces_expanded=state.m_expanded)


class LaceLike(Protocol):
    lace_id: int
    levels: list[int]
    step_bounds: list[tuple[float, float]]

    def interval_width(self) -> float: ...


class ActionTreeLike(Protocol):
    """Surface the adaptive loop needs from a per-action belief tree."""

    max_level: int
    laces: Sequence[LaceLike]

    def expand_next_lace(self) -> LaceLike: ...

    def refine_lace(self, lace: LaceLike, target_level: int) -> LaceLike: ...


@dataclass
class FeasibilityStats:
    """Per-action bookkeeping of one adaptive evaluation."""

    laces_expanded: int = 0
    refinements: int = 0
    iterations: int = 0
    trace: list[tuple[int, float, float, Status]] = field(default_factory=list)


def _lace_pair(lace: LaceLike, spec: ConstraintSpec) -> tuple[int, int]:
    return inner_indicator_bounds(lace.step_bounds, spec)


def adaptive_feasibility(
    tree: ActionTreeLike, spec: ConstraintSpec, m: int
) -> tuple[Verdict, FeasibilityStats]:
    """Accept or discard one action with as few laces and refinements as possible.

    Laces the tree already expanded (e.g. at a previous threshold) are reused;
    only their indicators are recomputed, so re-evaluating at a new delta
    costs no belief updates. While the verdict is unknown the loop both
    expands one more lace at level 0 and refines one lace whose indicator is
    still undetermined, picking the one closest to exact. At full expansion
    with every lace exact the merged bounds pin the sample fraction itself,
    so the loop always terminates with a verdict that matches full expansion.
    """
    if m < 1:
        raise ValueError("lace budget m must be at least 1")
    state = BoundState(m=m)
    stats = FeasibilityStats()
    # Refinement candidates, closest-to-exact first (ties: lowest lace index).
    # Finishing one lace resolves its indicator and moves a bound by 1/m;
    # spreading refinements across the widest laces instead would leave every
    # indicator undetermined until almost all laces are exact. Entries go
    # stale when their lace is refined; the stored level detects that on pop.
    heap: list[tuple[int, int, int]] = []

    def consider(idx: int) -> None:
        lo, hi = state.pairs[idx]
        lace = tree.laces[idx]
        level = min(lace.levels, default=tree.max_level)
        if lo != hi and level < tree.max_level:
            heapq.heappush(heap, (-level, idx, level))

    for lace in tree.laces[:m]:
        state.add_lace(_lace_pair(lace, spec))
        consider(state.m_expanded - 1)
    while True:
        verdict = merged_check(state, spec)
        stats.iterations += 1
        stats.trace.append((state.m_expanded, verdict.lb, verdict.ub, verdict.status))
        if verdict.status is not Status.UNKNOWN:
            stats.laces_expanded = state.m_expanded
            return verdict, stats
        if state.m_expanded < m:
            lace = tree.expand_next_lace()
            state.add_lace(_lace_pair(lace, spec))
            consider(state.m_expanded - 1)
        # Greedy victim: among laces whose indicator is still undetermined,
        # refine the one closest to exact by one level.
        while heap:
            _, idx, level = heapq.heappop(heap)
            lace = tree.laces[idx]
            lo, hi = state.pairs[idx]
            if lo == hi or min(lace.levels) != level:
                continue
            tree.refine_lace(lace, level + 1)
            state.replace_lace(idx, _lace_pair(lace, spec))
            stats.refinements += 1
            consider(idx)
            break
