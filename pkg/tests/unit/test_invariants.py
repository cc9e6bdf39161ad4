"""
Tests for the structural invariant checks.
"""

import numpy as np

from dmvrpx.domain import PolicyName, ValueKind, ValueTable, enumerate_settings
from dmvrpx.dp import PolicyEvaluation, decompose_optimal, evaluate_policy, solve_optimal
from dmvrpx.instgen import generate_instance
from dmvrpx.invariants import CHECKS, InvariantReport, check_instance_invariants
from dmvrpx.metrics import compute_errors, sample_decision_rates
from dmvrpx.policies import build_rule


def _checked_instance(ordinal=30, instance_id=0):
    instance = generate_instance(enumerate_settings()[ordinal], instance_id, 42)
    optimal = solve_optimal(instance)
    rules = {p: build_rule(p, instance, optimal) for p in PolicyName}
    evaluations = {p: evaluate_policy(r, instance) for p, r in rules.items()}
    records = {p: compute_errors(optimal, r, instance) for p, r in rules.items()}
    return instance, optimal, rules, evaluations, records


class TestInvariantReport:
    def test_record_and_merge(self):
        a = InvariantReport()
        a.record("oc_nonnegative", 10, 0)
        b = InvariantReport()
        b.record("oc_nonnegative", 5, 2)

        merged = a.merge(b)
        assert a.ok
        assert not merged.ok
        assert merged.checked["oc_nonnegative"] == 15
        assert merged.violations["oc_nonnegative"] == 2

    def test_serialize_lists_every_check(self):
        data = InvariantReport().serialize()

        assert list(data) == list(CHECKS)
        assert data["rate_mass"] == {"checked": 0, "violations": 0}


class TestCheckInstanceInvariants:
    def test_solved_instances_pass(self):
        for ordinal in (0, 30, 65):
            instance, optimal, rules, evaluations, records = _checked_instance(ordinal)
            report = check_instance_invariants(
                instance,
                optimal,
                decompose_optimal(optimal, instance),
                rules,
                evaluations,
                records,
            )

            assert report.ok, report.serialize()
            always = ("oc_nonnegative", "regret_nonnegative", "rate_mass", "objective_bound", "decomposition")
            assert all(report.checked[c] > 0 for c in always)

    def test_objective_above_optimal_is_flagged(self):
        instance, optimal, rules, evaluations, _ = _checked_instance()
        inflated = PolicyEvaluation(evaluations[PolicyName.DPC].table, optimal.root_value + 1.0)

        report = check_instance_invariants(instance, optimal, evaluations={PolicyName.DPC: inflated})

        assert report.violations["objective_bound"] == 1

    def test_broken_decomposition_is_flagged(self):
        instance, optimal, *_ = _checked_instance()
        revenue, cost = decompose_optimal(optimal, instance)
        shifted = ValueTable(ValueKind.COST_SHARE, cost.values + 1.0)

        report = check_instance_invariants(instance, optimal, (revenue, shifted))

        assert report.violations["decomposition"] == report.checked["decomposition"]

    def test_sampled_rates_skip_mass_check(self):
        instance, optimal, rules, _, _ = _checked_instance()
        rule = rules[PolicyName.MYOPIC]
        sampled = compute_errors(optimal, rule, instance, sample_decision_rates(rule, instance, 300, 1))

        report = check_instance_invariants(
            instance, optimal, rules=rules, records={PolicyName.MYOPIC: sampled}, exact_rates=False
        )

        assert report.checked["rate_mass"] == 0
        assert report.ok

    def test_exact_rates_carry_half_per_epoch(self):
        instance, optimal, rules, _, records = _checked_instance()
        report = check_instance_invariants(
            instance, optimal, rules=rules, records={PolicyName.MCTS: records[PolicyName.MCTS]}
        )

        assert report.checked["rate_mass"] == instance.horizon
        assert report.violations["rate_mass"] == 0
        assert np.isclose(records[PolicyName.MCTS].decision_rate.sum(), 0.5 * instance.horizon)
