"""Planning algorithms: constrained selection and maximal-feasible-return search.

Algorithms 1 and 2 solve optimality under a probabilistic constraint with a
user-supplied threshold: alg1 checks feasibility adaptively before spending
laces on utilities, alg2 fully expands everything first. Algorithms 3 and 4
maximize the Value at Risk of the return over the candidates: alg3 runs a
bisection on the threshold, discarding candidates permanently once infeasible
(they stay infeasible for every larger threshold), alg4 computes every sample
VaR outright. The pairs return identical choices; the adaptive variants just
expand fewer laces.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

from .belief_tree import ActionTree
from .constraint_eval import (
    ConstraintSpec,
    Form,
    Status,
    adaptive_feasibility,
    fraction_satisfies,
    inner_indicator,
)


@dataclass
class ActionRecord:
    """Per-candidate outcome of one planning run."""

    path_id: int
    status: Status
    laces_expanded: int
    utility: float | None = None
    var: float | None = None
    wall_time_s: float = 0.0
    trace: list = field(default_factory=list)


@dataclass
class PlanResult:
    """Outcome of a planning session.

    ``chosen_path_id`` is absent when every candidate was discarded;
    ``delta_star`` is set by the VaR planners only.
    """

    algorithm: str
    chosen_path_id: int | None
    delta_star: float | None
    per_action: list[ActionRecord]
    n_total: int
    n_expanded: int
    runtime_s: float = 0.0
    bisection: "BisectionState | None" = None

    def record(self, path_id: int) -> ActionRecord:
        for rec in self.per_action:
            if rec.path_id == path_id:
                return rec
        raise KeyError(path_id)


@dataclass
class BisectionState:
    """Threshold-search state; the step never grows and discards are final."""

    delta: float
    step: float
    survivors: list[int]
    iterations: int = 0
    precision: float = 0.0
    trace: list[tuple[int, float, float, tuple[int, ...]]] = field(default_factory=list)


def utility_estimate(returns: Sequence[float]) -> float:
    """Sample-mean utility over the exact per-lace returns."""
    if not returns:
        raise ValueError("utility estimate needs at least one lace return")
    return float(sum(returns) / len(returns))


def sample_var(returns: Sequence[float], epsilon: float) -> float:
    """Sample Value at Risk: the largest threshold exceeded by a 1-epsilon fraction.

    Equals the ascending order statistic ``s_(m-k+1)`` with
    ``k = ceil(m * (1 - epsilon))``, which realizes
    ``sup { delta : |{l : s_l > delta}| / m >= 1 - epsilon }``.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    m = len(returns)
    if m < 1:
        raise ValueError("sample VaR needs at least one return")
    # The same boundary tolerance as the outer-constraint comparison, so the
    # quantile agrees with feasibility at thresholds like epsilon = k/m.
    k = math.ceil(m * (1.0 - epsilon) - m * 1e-12)
    ordered = sorted(returns)
    return float(ordered[m - k])


def speedup(t_baseline: float, t_ours: float) -> float:
    """Relative running-time saving versus the baseline."""
    return (t_baseline - t_ours) / t_baseline


def laces_fraction(n_total: int, n_expanded: int) -> float:
    """Relative fraction of skipped observation laces."""
    return (n_total - n_expanded) / n_total


def _expand_all(tree: ActionTree, m: int) -> None:
    while tree.n_expanded < m:
        tree.expand_next_lace()


def _refine_all_exact(tree: ActionTree) -> None:
    for lace in tree.laces:
        if not lace.is_exact:
            tree.refine_lace(lace, tree.max_level)


def _returns(tree: ActionTree, operator: str) -> list[float]:
    return [tree.lace_return(lace, operator) for lace in tree.laces]


def _choose_best(records: list[ActionRecord]) -> int | None:
    feasible = [rec for rec in records if rec.status is Status.FEASIBLE]
    if not feasible:
        return None
    best = max(feasible, key=lambda rec: (rec.utility, -rec.path_id))
    return best.path_id


def alg1_adaptive_constrained(
    trees: Sequence[ActionTree], spec: ConstraintSpec, m: int
) -> PlanResult:
    """Adaptively check every candidate, then pick the best utility among the feasible.

    Discarded candidates stop expanding at the verdict; feasible candidates
    are fully expanded and refined to exact so the utility estimate uses all
    ``m`` laces.
    """
    records: list[ActionRecord] = []
    t0 = time.perf_counter()
    for tree in trees:
        ta = time.perf_counter()
        verdict, stats = adaptive_feasibility(tree, spec, m)
        utility = None
        if verdict.status is Status.FEASIBLE:
            _expand_all(tree, m)
            _refine_all_exact(tree)
            utility = utility_estimate(_returns(tree, "rho"))
        records.append(
            ActionRecord(
                path_id=tree.path_id,
                status=verdict.status,
                laces_expanded=tree.n_expanded,
                utility=utility,
                wall_time_s=time.perf_counter() - ta,
                trace=[
                    (spec.delta, i, expanded, lb, ub, status.value)
                    for i, (expanded, lb, ub, status) in enumerate(stats.trace)
                ],
            )
        )
    return PlanResult(
        algorithm="alg1",
        chosen_path_id=_choose_best(records),
        delta_star=None,
        per_action=records,
        n_total=m * len(trees),
        n_expanded=sum(rec.laces_expanded for rec in records),
        runtime_s=time.perf_counter() - t0,
    )


def alg2_baseline_constrained(
    trees: Sequence[ActionTree], spec: ConstraintSpec, m: int
) -> PlanResult:
    """Baseline: expand everything, rank by utility, verify feasibility exactly.

    No early dismissal; every candidate expands all ``m`` laces and is checked
    against the exact sample fraction.
    """
    records: list[ActionRecord] = []
    t0 = time.perf_counter()
    for tree in trees:
        ta = time.perf_counter()
        _expand_all(tree, m)
        _refine_all_exact(tree)
        satisfied = sum(
            inner_indicator(lace.step_exact, spec) for lace in tree.laces
        )
        fraction = satisfied / m
        status = Status.FEASIBLE if fraction_satisfies(fraction, spec.epsilon) else Status.INFEASIBLE
        records.append(
            ActionRecord(
                path_id=tree.path_id,
                status=status,
                laces_expanded=tree.n_expanded,
                utility=utility_estimate(_returns(tree, "rho")),
                wall_time_s=time.perf_counter() - ta,
                trace=[(spec.delta, 0, m, fraction, fraction, status.value)],
            )
        )
    ranked = sorted(records, key=lambda rec: (-rec.utility, rec.path_id))
    chosen = next((rec.path_id for rec in ranked if rec.status is Status.FEASIBLE), None)
    return PlanResult(
        algorithm="alg2",
        chosen_path_id=chosen,
        delta_star=None,
        per_action=records,
        n_total=m * len(trees),
        n_expanded=sum(rec.laces_expanded for rec in records),
        runtime_s=time.perf_counter() - t0,
    )


def _satisfied_count(tree: ActionTree, spec: ConstraintSpec) -> int:
    count = 0
    for lace in tree.laces:
        lowers = [lo for lo, _ in lace.step_bounds]
        count += inner_indicator(lowers, spec)
    return count


def alg3_var_bisection(
    trees: Sequence[ActionTree],
    epsilon: float,
    m: int,
    precision: float,
    form: Form = Form.CUMULATIVE,
) -> PlanResult:
    """Maximize the feasible threshold by bisection over adaptive feasibility checks.

    The threshold starts mid-range with step = range/4 and the step halves
    every iteration, so a candidate found infeasible at some threshold can be
    discarded for good. Laces and their bounds persist across threshold
    changes; only indicator arithmetic reruns. After the first move whose
    step is at most ``precision`` one final check runs at the new position;
    that extra evaluation pins ``delta_star`` within ``precision`` of the
    best candidate's sample VaR (the plain last-feasible threshold can lag by
    up to twice the final step).
    """
    if precision <= 0.0:
        raise ValueError("precision must be positive")
    if not trees:
        raise ValueError("need at least one candidate")
    delta_min = 0.0
    delta_max = trees[0].root.droot()
    state = BisectionState(
        delta=0.5 * (delta_min + delta_max),
        step=0.25 * (delta_max - delta_min),
        survivors=[tree.path_id for tree in trees],
        precision=precision,
    )
    by_id = {tree.path_id: tree for tree in trees}
    spec = ConstraintSpec(form=form, delta=state.delta, epsilon=epsilon)
    records: dict[int, ActionRecord] = {
        tree.path_id: ActionRecord(tree.path_id, Status.UNKNOWN, 0) for tree in trees
    }
    t0 = time.perf_counter()
    delta_star: float | None = None
    last_feasible: list[int] = []
    final_pass = False
    while True:
        state.iterations += 1
        feasible: list[int] = []
        for path_id in state.survivors:
            tree = by_id[path_id]
            verdict, _ = adaptive_feasibility(tree, spec.at_delta(state.delta), m)
            records[path_id].trace.append(
                (state.delta, state.iterations, verdict.laces_expanded,
                 verdict.lb, verdict.ub, verdict.status.value)
            )
            if verdict.status is Status.FEASIBLE:
                feasible.append(path_id)
        if feasible:
            delta_star = state.delta
            last_feasible = feasible
            state.survivors = feasible
        state.trace.append((state.iterations, state.delta, state.step, tuple(state.survivors)))
        if final_pass:
            break
        state.delta += state.step if feasible else -state.step
        if state.step <= precision:
            final_pass = True
        state.step *= 0.5
    chosen: int | None = None
    if delta_star is not None:
        # Tie-break at the final threshold: most satisfied laces, then lowest id.
        final_spec = spec.at_delta(delta_star)
        scored = [
            (-_satisfied_count(by_id[path_id], final_spec), path_id) for path_id in last_feasible
        ]
        chosen = min(scored)[1]
    for tree in trees:
        rec = records[tree.path_id]
        rec.laces_expanded = tree.n_expanded
        rec.status = (
            Status.FEASIBLE
            if chosen is not None and tree.path_id in last_feasible
            else Status.INFEASIBLE
        )
    return PlanResult(
        algorithm="alg3",
        chosen_path_id=chosen,
        delta_star=delta_star,
        per_action=[records[tree.path_id] for tree in trees],
        n_total=m * len(trees),
        n_expanded=sum(tree.n_expanded for tree in trees),
        runtime_s=time.perf_counter() - t0,
        bisection=state,
    )


def alg4_var_bruteforce(
    trees: Sequence[ActionTree], epsilon: float, m: int
) -> PlanResult:
    """Baseline VaR maximization: full expansion, exact returns, sample quantiles."""
    records: list[ActionRecord] = []
    t0 = time.perf_counter()
    for tree in trees:
        ta = time.perf_counter()
        _expand_all(tree, m)
        _refine_all_exact(tree)
        records.append(
            ActionRecord(
                path_id=tree.path_id,
                status=Status.UNKNOWN,
                laces_expanded=tree.n_expanded,
                utility=utility_estimate(_returns(tree, "rho")),
                var=sample_var(_returns(tree, "phi"), epsilon),
                wall_time_s=time.perf_counter() - ta,
            )
        )
    best = max(records, key=lambda rec: (rec.var, -rec.path_id))
    delta_star = best.var
    for rec in records:
        rec.status = Status.FEASIBLE if rec.var >= delta_star else Status.INFEASIBLE
    return PlanResult(
        algorithm="alg4",
        chosen_path_id=best.path_id,
        delta_star=delta_star,
        per_action=records,
        n_total=m * len(trees),
        n_expanded=sum(rec.laces_expanded for rec in records),
        runtime_s=time.perf_counter() - t0,
    )
