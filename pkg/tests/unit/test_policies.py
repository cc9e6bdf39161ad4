"""
Tests for the decision rules.
"""

import numpy as np
import pytest

from dmvrpx.domain import Constraint, OrderSet, PolicyName, Profitability
from dmvrpx.dp import SolutionKind, solve_dpc, solve_optimal
from dmvrpx.errors import ContractViolation
from dmvrpx.policies import (
    MyopicRule,
    SolutionRule,
    accept_feasible_rule,
    as_rule,
    build_rule,
    myopic_rule,
    reject_all_rule,
)
from dmvrpx.routing import route_table
from tests.fixtures import line_instance, make_setting, toy_instance


def _three_customers():
    # load limit 3 never binds with three customers
    stream = [(10.0, 15.0), (5.0, 15.0), (-20.0, 25.0)]
    return line_instance(make_setting(Profitability.LOW, Constraint.LOAD), stream)


class TestSolutionRule:
    def test_replays_solution_decisions(self):
        instance = _three_customers()
        optimal = solve_optimal(instance)
        rule = as_rule(optimal)

        assert rule.name == "optimal"
        for t in range(1, instance.horizon + 1):
            assert np.array_equal(rule.decision_vector(t), optimal.decision_vector(t))
            assert np.array_equal(rule.oc_vector(t), optimal.oc_vector(t))

    def test_scalar_accessors_check_state(self):
        rule = as_rule(solve_optimal(toy_instance()))

        assert rule.decide(1, OrderSet.empty()) == 1
        assert rule.oc(1, OrderSet.empty()) == pytest.approx(12.0)
        with pytest.raises(ContractViolation):
            rule.decide(1, OrderSet.of(1))

    @pytest.mark.parametrize("factory", [lambda i: as_rule(solve_dpc(i)), myopic_rule])
    def test_lookup_of_infeasible_state_raises(self, factory):
        """Four accepted orders break the load limit of 3."""
        stream = [(float(c), 15.0) for c in range(1, 6)]
        rule = factory(line_instance(make_setting(), stream))
        state = OrderSet.of(1, 2, 3, 4)

        with pytest.raises(ContractViolation, match="infeasible"):
            rule.oc(5, state)
        with pytest.raises(ContractViolation, match="infeasible"):
            rule.decide(5, state)


class TestMyopicRule:
    def test_oc_is_insertion_cost(self):
        rule = myopic_rule(_three_customers())

        # out to 10 and back costs 20 at factor 1.0
        assert rule.oc(1, OrderSet.empty()) == pytest.approx(20.0)
        # 5 lies inside the tour to 10
        assert rule.oc(2, OrderSet.of(1)) == 0.0
        # -20 adds a second leg of 40
        assert rule.oc(3, OrderSet.of(1, 2)) == pytest.approx(40.0)

    def test_decides_on_threshold(self):
        rule = myopic_rule(_three_customers())

        assert rule.decide(1, OrderSet.empty()) == 0
        assert rule.decide(2, OrderSet.of(1)) == 1
        assert rule.decide(3, OrderSet.of(1, 2)) == 0

    def test_rejects_infeasible_requests(self):
        stream = [(1.0, 25.0), (2.0, 25.0), (3.0, 25.0), (4.0, 25.0)]
        instance = line_instance(make_setting(Profitability.HIGH), stream)
        rule = myopic_rule(instance)

        assert rule.decide(4, OrderSet.of(1, 2, 3)) == 0
        assert rule.decide(4, OrderSet.of(1, 2)) == 1


class TestConstantRules:
    def test_reject_all_never_accepts(self):
        instance = _three_customers()
        rule = reject_all_rule(instance)

        assert rule.name == "reject_all"
        for t in range(1, instance.horizon + 1):
            assert not rule.decision_vector(t).any()
            assert np.isinf(rule.oc_vector(t)).all()

    def test_accept_feasible_follows_route_table(self):
        instance = _three_customers()
        rule = accept_feasible_rule(instance)
        feasible = route_table(instance).feasible

        for t in range(1, instance.horizon + 1):
            half = 1 << (t - 1)
            assert np.array_equal(rule.decision_vector(t), feasible[half : 2 * half])


class TestBuildRule:
    def test_optimal_reuses_given_solution(self):
        instance = toy_instance()
        optimal = solve_optimal(instance)
        rule = build_rule(PolicyName.OPTIMAL, instance, optimal)

        assert isinstance(rule, SolutionRule)
        assert rule.solution is optimal

    @pytest.mark.parametrize("policy", [PolicyName.DPC, PolicyName.MCTS])
    def test_approximations_solve_their_recursion(self, policy):
        rule = build_rule(policy, toy_instance())

        assert rule.solution.kind is SolutionKind(policy.value)
        assert rule.name == policy.value

    def test_myopic(self):
        rule = build_rule(PolicyName.MYOPIC, toy_instance())

        assert isinstance(rule, MyopicRule)
        assert rule.name == "myopic"

    def test_dpc_rule_matches_direct_solve(self):
        instance = _three_customers()
        rule = build_rule(PolicyName.DPC, instance)
        for t in range(1, instance.horizon + 1):
            assert np.array_equal(rule.decision_vector(t), solve_dpc(instance).decision_vector(t))
