"""
Tests for the exact backward recursions.

These tests verify:
- The one-customer example (values, opportunity cost, decomposition)
- Agreement with a dict-based reference recursion visiting states in
  shuffled order, and with the brute-force decision-tree oracle
- Policy evaluation bounds and the V = R* + F* identity
"""

import random

import numpy as np
import pytest

from dmvrpx.domain import LocationDist, OrderSet, Profitability, enumerate_settings
from dmvrpx.dp import (
    SolutionKind,
    decompose_optimal,
    evaluate_policy,
    solve,
    solve_dpc,
    solve_mcts,
    solve_optimal,
)
from dmvrpx.errors import ContractViolation
from dmvrpx.instgen import generate_instance
from dmvrpx.policies import as_rule, myopic_rule, reject_all_rule
from dmvrpx.routing import optimal_tour_length, route_table
from dmvrpx.selftest import brute_force_value, oracle_instances
from tests.fixtures import TOY_VARIANTS, line_instance, make_setting, toy_instance


def reference_recursion(instance, *, with_cost: bool, revenue_in_value: bool, seed: int = 0):
    """
    Plain dict recursion over frozensets. States within an epoch are
    visited in shuffled order, so nothing depends on bitmask layout.
    """
    horizon = instance.horizon
    limit = instance.setting.constraint.limit
    by_load = instance.setting.constraint.value == "load"
    shuffle = random.Random(seed).shuffle

    def length(accepted):
        return optimal_tour_length([instance.customer(c).location for c in accepted])

    def feasible(accepted):
        return len(accepted) <= limit if by_load else length(accepted) <= limit + 1e-9

    values = {}
    states = [frozenset(c for c in range(1, horizon + 1) if m >> (c - 1) & 1) for m in range(1 << horizon)]
    for accepted in states:
        values[horizon, accepted] = -instance.cost_factor * length(accepted) if with_cost else 0.0

    for t in range(horizon, 0, -1):
        epoch_states = [s for s in states if all(c < t for c in s)]
        shuffle(epoch_states)
        for accepted in epoch_states:
            reject = values[t, accepted]
            grown = accepted | {t}
            delta = reject - values[t, grown]
            margin = instance.customer(t).revenue - delta
            accept = feasible(grown) and margin >= -1e-9
            gain = margin if revenue_in_value else -delta
            values[t - 1, accepted] = reject + 0.5 * (gain if accept else 0.0)
    return values


def _study_sample():
    """Small instances from every constraint and revenue regime."""
    picks = [0, 7, 14, 21, 30, 41, 52, 65]
    return [generate_instance(enumerate_settings()[i], 0, 42) for i in picks]


# ----------------------------------------------------------------------------
# One-customer example
# ----------------------------------------------------------------------------


class TestToyExample:
    @pytest.fixture(params=TOY_VARIANTS, ids=["load", "dist"])
    def toy(self, request):
        location, cons = request.param
        return toy_instance(location, cons)

    def test_optimal_value_and_opportunity_cost(self, toy):
        optimal = solve_optimal(toy)

        assert optimal.root_value == pytest.approx(1.5)
        assert optimal.oc_estimate(1, OrderSet.empty()) == pytest.approx(12.0)
        assert optimal.decision(1, OrderSet.empty()) == 1

    def test_decomposition_splits_revenue_and_cost(self, toy):
        revenue, cost = decompose_optimal(solve_optimal(toy), toy)

        assert revenue[0, OrderSet.empty()] == pytest.approx(7.5)
        assert cost[0, OrderSet.empty()] == pytest.approx(-6.0)

    def test_dpc_ignores_routing_cost(self, toy):
        dpc = solve_dpc(toy)

        assert dpc.oc_estimate(1, OrderSet.empty()) == 0.0
        assert dpc.root_value == pytest.approx(7.5)

    def test_mcts_sees_only_routing_cost(self, toy):
        mcts = solve_mcts(toy)

        assert mcts.oc_estimate(1, OrderSet.empty()) == pytest.approx(12.0)
        assert mcts.root_value == pytest.approx(-6.0)

    def test_reject_all_earns_nothing(self, toy):
        assert evaluate_policy(reject_all_rule(toy), toy).value == 0.0


# ----------------------------------------------------------------------------
# Reference recursions and oracles
# ----------------------------------------------------------------------------


class TestReferenceRecursion:
    @pytest.mark.parametrize(
        "kind, with_cost, revenue_in_value",
        [
            (SolutionKind.OPTIMAL, True, True),
            (SolutionKind.DPC, False, True),
            (SolutionKind.MCTS, True, False),
        ],
    )
    def test_tables_match_shuffled_reference(self, kind, with_cost, revenue_in_value):
        for instance in _study_sample():
            solution = solve(kind, instance)
            reference = reference_recursion(
                instance, with_cost=with_cost, revenue_in_value=revenue_in_value
            )
            for (t, accepted), value in reference.items():
                mask = OrderSet.of(*accepted).mask
                if solution.table.is_feasible(mask):
                    assert solution.table[t, mask] == pytest.approx(value, abs=1e-9)

    def test_optimal_matches_brute_force_oracle(self):
        for instance in oracle_instances(seed=5, n=12):
            assert solve_optimal(instance).root_value == pytest.approx(
                brute_force_value(instance), abs=1e-9
            )

    def test_zero_routing_cost_makes_optimal_equal_dpc(self):
        instance = generate_instance(enumerate_settings()[20], 1, 42)
        free = line_instance(
            instance.setting,
            [(c.location, c.revenue) for c in instance.customers],
            routing_cost=0.0,
        )

        assert np.array_equal(solve_optimal(free).table.values, solve_dpc(free).table.values)
        assert np.array_equal(solve_optimal(free).decisions, solve_dpc(free).decisions)


# ----------------------------------------------------------------------------
# Structural properties
# ----------------------------------------------------------------------------


class TestOptimalProperties:
    def test_opportunity_cost_is_nonnegative(self):
        for instance in _study_sample():
            optimal = solve_optimal(instance)
            for t in range(1, instance.horizon + 1):
                assert np.all(optimal.oc_vector(t) >= -1e-9)

    def test_values_decompose_exactly(self):
        for instance in _study_sample():
            optimal = solve_optimal(instance)
            revenue, cost = decompose_optimal(optimal, instance)
            for t in range(instance.horizon + 1):
                np.testing.assert_allclose(
                    optimal.table.epoch(t), revenue.epoch(t) + cost.epoch(t), rtol=0, atol=1e-9
                )

    def test_following_optimal_decisions_reaches_optimal_value(self):
        for instance in _study_sample():
            optimal = solve_optimal(instance)
            evaluation = evaluate_policy(as_rule(optimal), instance)
            assert evaluation.value == pytest.approx(optimal.root_value, abs=1e-9)

    def test_approximate_policies_never_beat_optimal(self):
        for instance in _study_sample():
            j_star = solve_optimal(instance).root_value
            for rule in (as_rule(solve_dpc(instance)), as_rule(solve_mcts(instance)), myopic_rule(instance)):
                evaluation = evaluate_policy(rule, instance)
                assert evaluation.value <= j_star + 1e-9
                assert evaluation.infeasible_acceptances == 0


class TestApproximations:
    def test_last_epoch_components(self):
        """At the last epoch only routing cost is displaced, and it is exactly the insertion cost."""
        for instance in _study_sample():
            horizon = instance.horizon
            exact = solve_optimal(instance).oc_vector(horizon)

            np.testing.assert_allclose(solve_mcts(instance).oc_vector(horizon), exact, rtol=0, atol=1e-9)
            np.testing.assert_allclose(myopic_rule(instance).oc_vector(horizon), exact, rtol=0, atol=1e-9)
            assert np.all(solve_dpc(instance).oc_vector(horizon) == 0.0)

    def test_displacement_cost_is_nonnegative(self):
        for instance in _study_sample():
            dpc = solve_dpc(instance)
            for t in range(1, instance.horizon + 1):
                assert np.all(dpc.oc_vector(t) >= -1e-9)

    def test_mcts_rejects_the_first_request_on_some_low_clustered_stream(self):
        """Serving a lone far customer costs more than it pays, so the tour never starts."""
        settings = [
            s
            for s in enumerate_settings()
            if s.profitability is Profitability.LOW and s.location_dist is LocationDist.CLUST_SORT
        ]
        first = [
            solve_mcts(generate_instance(s, i, 42)).decision(1, OrderSet.empty())
            for s in settings
            for i in range(5)
        ]

        assert 0 in first


class TestPolicySolution:
    def test_unreachable_state_raises(self):
        optimal = solve_optimal(toy_instance())
        with pytest.raises(ContractViolation):
            optimal.decision(1, OrderSet.of(1))

    def test_epoch_out_of_range_raises(self):
        optimal = solve_optimal(toy_instance())
        with pytest.raises(ContractViolation):
            optimal.oc_estimate(2, OrderSet.empty())

    def test_infeasible_state_raises(self):
        stream = [(float(c), 15.0) for c in range(1, 6)]
        optimal = solve_optimal(line_instance(make_setting(), stream))

        assert optimal.decision(5, OrderSet.of(1, 2, 3)) == 0
        with pytest.raises(ContractViolation, match="infeasible"):
            optimal.oc_estimate(5, OrderSet.of(1, 2, 3, 4))
        with pytest.raises(ContractViolation, match="infeasible"):
            optimal.table[4, OrderSet.of(1, 2, 3, 4)]

    def test_tables_hold_only_feasible_order_sets(self):
        for instance in _study_sample():
            optimal = solve_optimal(instance)
            feasible = route_table(instance).feasible
            revenue, cost = decompose_optimal(optimal, instance)
            evaluation = evaluate_policy(myopic_rule(instance), instance)
            for table in (optimal.table, revenue, cost, evaluation.table):
                assert all(feasible[state.mask] for _, state, _ in table.items())

    def test_decision_arrays_are_read_only(self):
        optimal = solve_optimal(toy_instance())
        with pytest.raises(ValueError):
            optimal.decisions[1, 0] = False

    def test_decomposition_requires_optimal_solution(self):
        instance = toy_instance()
        with pytest.raises(ValueError, match="optimal"):
            decompose_optimal(solve_dpc(instance), instance)

    def test_ties_accept(self):
        """A request whose revenue exactly covers its opportunity cost is accepted."""
        instance = line_instance(make_setting(), [(12.5, 15.0)])

        assert solve_optimal(instance).decision(1, OrderSet.empty()) == 1
        assert solve_optimal(instance).root_value == pytest.approx(0.0, abs=1e-12)
