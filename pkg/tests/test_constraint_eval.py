from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beliefplan.constraint_eval import (
    BoundState,
    ConstraintSpec,
    Form,
    Status,
    adaptive_feasibility,
    inner_indicator,
    inner_indicator_bounds,
    layer_bounds,
    merged_check,
)

from synthetic import FakeTree

CUM = lambda delta, eps=0.1: ConstraintSpec(Form.CUMULATIVE, delta, eps)
MUL = lambda delta, eps=0.1: ConstraintSpec(Form.MULTIPLICATIVE, delta, eps)


def oracle_verdict(step_values: list[list[float]], spec: ConstraintSpec) -> Status:
    """Full expansion + exact evaluation of the sample fraction."""
    m = len(step_values)
    satisfied = sum(inner_indicator(vals, spec) for vals in step_values)
    from beliefplan.constraint_eval import fraction_satisfies

    ok = fraction_satisfies(satisfied / m, spec.epsilon)
    return Status.FEASIBLE if ok else Status.INFEASIBLE


class TestInnerIndicator:
    def test_cumulative_strict(self):
        assert inner_indicator([0.5, 0.3], CUM(0.7)) == 1
        assert inner_indicator([0.5, 0.3], CUM(0.8)) == 0  # strict >

    def test_multiplicative_non_strict(self):
        assert inner_indicator([0.5, 0.3], MUL(0.3)) == 1
        assert inner_indicator([0.5, 0.3], MUL(0.31)) == 0

    def test_epsilon_validated(self):
        with pytest.raises(ValueError):
            ConstraintSpec(Form.CUMULATIVE, 0.0, 1.0)
        with pytest.raises(ValueError):
            ConstraintSpec(Form.CUMULATIVE, 0.0, -0.1)


class TestInnerIndicatorBounds:
    def test_both_one(self):
        pairs = [(0.4, 0.6), (0.2, 0.4)]
        assert inner_indicator_bounds(pairs, CUM(0.5)) == (1, 1)

    def test_both_zero(self):
        pairs = [(0.4, 0.6), (0.2, 0.4)]
        assert inner_indicator_bounds(pairs, CUM(1.1)) == (0, 0)

    def test_undetermined(self):
        pairs = [(0.4, 0.6), (0.2, 0.4)]
        assert inner_indicator_bounds(pairs, CUM(0.8)) == (0, 1)

    @given(
        st.lists(
            st.tuples(st.floats(-1, 1), st.floats(0, 0.5), st.floats(0, 0.5)),
            min_size=1,
            max_size=5,
        ),
        st.floats(-1.5, 2.0),
        st.sampled_from([Form.CUMULATIVE, Form.MULTIPLICATIVE]),
    )
    @settings(max_examples=300, deadline=None)
    def test_sandwich_property(self, steps, delta, form):
        spec = ConstraintSpec(form, delta, 0.1)
        exact = [v for v, _, _ in steps]
        pairs = [(v - lo, v + hi) for v, lo, hi in steps]
        c_lo, c_hi = inner_indicator_bounds(pairs, spec)
        assert c_lo <= inner_indicator(exact, spec) <= c_hi


class TestLayerBounds:
    def test_arithmetic(self):
        state = BoundState(m=10)
        for c in (1, 1, 0, 1):
            state.add_lace((c, c))
        lb, ub = layer_bounds(state)
        assert math.isclose(lb, 0.3)
        assert math.isclose(ub, 0.9)

    def test_vacuous_when_nothing_expanded(self):
        lb, ub = layer_bounds(BoundState(m=10))
        assert (lb, ub) == (0.0, 1.0)

    def test_full_exact_expansion_recovers_fraction(self):
        state = BoundState(m=4)
        for c in (1, 0, 1, 1):
            state.add_lace((c, c))
        lb, ub = layer_bounds(state)
        assert lb == ub == 0.75


class TestMergedCheck:
    def test_feasible(self):
        state = BoundState(m=10)
        for _ in range(8):
            state.add_lace((1, 1))
        v = merged_check(state, CUM(0.0, eps=0.25))
        assert v.status is Status.FEASIBLE
        assert v.lb >= 0.75

    def test_infeasible(self):
        state = BoundState(m=10)
        for _ in range(3):
            state.add_lace((1, 1))
        for _ in range(5):
            state.add_lace((0, 0))
        v = merged_check(state, CUM(0.0, eps=0.25))
        assert v.status is Status.INFEASIBLE
        assert v.ub < 0.75

    def test_unknown(self):
        state = BoundState(m=10)
        for c in ((1, 1), (1, 1), (1, 1), (0, 1)):
            state.add_lace(c)
        v = merged_check(state, CUM(0.0, eps=0.25))
        assert v.status is Status.UNKNOWN


class TestAdaptiveFeasibility:
    def test_early_accept_after_fraction_of_laces(self):
        # All laces certify at level 0: feasibility needs ceil((1-eps)m) laces.
        m, eps = 20, 0.1
        tree = FakeTree([[1.0, 1.0]] * m, slack=0.1)
        verdict, stats = adaptive_feasibility(tree, CUM(0.5, eps), m)
        assert verdict.status is Status.FEASIBLE
        assert stats.laces_expanded == math.ceil((1 - eps) * m)
        assert all(lvl == 0 for lace in tree.laces for lvl in lace.levels)

    def test_early_discard_after_eps_fraction(self):
        # Every lace's upper bound already violates: discard after floor(eps*m)+1.
        m, eps = 8, 0.25
        tree = FakeTree([[0.0, 0.0]] * m, slack=0.1)
        verdict, stats = adaptive_feasibility(tree, CUM(1.0, eps), m)
        assert verdict.status is Status.INFEASIBLE
        assert stats.laces_expanded == math.ceil(eps * m) + 1
        assert stats.refinements == 0

    def test_loose_constraint_matches_oracle(self, rng):
        values = [[float(rng.normal(0.5, 0.4))] for _ in range(30)]
        spec = CUM(0.2, eps=0.9)
        tree = FakeTree(values, slack=0.3)
        verdict, stats = adaptive_feasibility(tree, spec, 30)
        assert verdict.status == oracle_verdict(values, spec)
        assert stats.laces_expanded <= 30

    @pytest.mark.parametrize("form", [Form.CUMULATIVE, Form.MULTIPLICATIVE])
    def test_verdict_equals_oracle_randomized(self, rng, form):
        for trial in range(60):
            m = int(rng.integers(1, 25))
            horizon = int(rng.integers(1, 5))
            values = [list(rng.normal(0.3, 0.5, size=horizon)) for _ in range(m)]
            delta = float(rng.normal(0.3 * horizon if form is Form.CUMULATIVE else 0.3, 0.4))
            eps = float(rng.uniform(0.0, 0.95))
            spec = ConstraintSpec(form, delta, eps)
            tree = FakeTree(values, max_level=int(rng.integers(1, 4)), slack=float(rng.uniform(0.05, 1.0)))
            verdict, stats = adaptive_feasibility(tree, spec, m)
            assert verdict.status == oracle_verdict(values, spec), (trial, values, delta, eps)
            assert stats.laces_expanded <= m

    def test_monotone_bounds_along_trace(self, rng):
        for _ in range(100):
            m = int(rng.integers(2, 30))
            horizon = int(rng.integers(1, 4))
            values = [list(rng.normal(0.2, 0.6, size=horizon)) for _ in range(m)]
            spec = ConstraintSpec(
                Form.CUMULATIVE if rng.random() < 0.5 else Form.MULTIPLICATIVE,
                float(rng.normal(0.2, 0.5)),
                float(rng.uniform(0, 0.9)),
            )
            tree = FakeTree(values, max_level=3, slack=float(rng.uniform(0.05, 0.8)))
            _, stats = adaptive_feasibility(tree, spec, m)
            lbs = [row[1] for row in stats.trace]
            ubs = [row[2] for row in stats.trace]
            assert all(b >= a - 1e-12 for a, b in zip(lbs, lbs[1:]))
            assert all(b <= a + 1e-12 for a, b in zip(ubs, ubs[1:]))
            assert all(lb <= ub + 1e-12 for lb, ub in zip(lbs, ubs))

    def test_reuses_existing_laces_and_only_indicators_change(self):
        # Re-evaluating the same tree at a new delta expands nothing new when
        # the existing laces already decide it.
        m = 10
        tree = FakeTree([[1.0]] * m, slack=0.05)
        v1, _ = adaptive_feasibility(tree, CUM(0.5, eps=0.1), m)
        expanded_after_first = len(tree.laces)
        v2, stats2 = adaptive_feasibility(tree, CUM(0.8, eps=0.1), m)
        assert v1.status is Status.FEASIBLE and v2.status is Status.FEASIBLE
        assert len(tree.laces) == expanded_after_first
        assert stats2.laces_expanded <= expanded_after_first

    def test_feasibility_flip_at_lace_count_resolution(self):
        # k of m violating laces: infeasible for eps < k/m, feasible at k/m.
        m, k = 300, 7
        values = [[0.0] for _ in range(k)] + [[1.0] for _ in range(m - k)]
        spec_tight = CUM(0.5, eps=(k - 1) / m)
        spec_exact = CUM(0.5, eps=k / m)
        tree = FakeTree(values, slack=0.05)
        v_tight, _ = adaptive_feasibility(tree, spec_tight, m)
        tree2 = FakeTree(values, slack=0.05)
        v_exact, _ = adaptive_feasibility(tree2, spec_exact, m)
        assert v_tight.status is Status.INFEASIBLE
        assert v_exact.status is Status.FEASIBLE

    def test_requires_positive_budget(self):
        with pytest.raises(ValueError):
            adaptive_feasibility(FakeTree([[1.0]]), CUM(0.0), 0)
