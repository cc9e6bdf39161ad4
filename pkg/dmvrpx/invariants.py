"""
Structural checks run on every solved instance. Each check counts the
decision points (or values) it inspected and how many of them violate it.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from dmvrpx.domain import TOLERANCE, Instance, PolicyName, ValueTable
from dmvrpx.dp import PolicyEvaluation, PolicySolution
from dmvrpx.metrics import MetricRecords, weighted_error_ratio
from dmvrpx.policies import DecisionRule


LOG = logging.getLogger(__name__)

RATE_TOLERANCE = 1e-12

CHECKS = (
    "oc_nonnegative",
    "regret_nonnegative",
    "sign_bracketing",
    "error_ratio_bounds",
    "rate_mass",
    "objective_bound",
    "decomposition",
)


@dataclass
class InvariantReport:
    checked: Counter = field(default_factory=Counter)
    violations: Counter = field(default_factory=Counter)

    def record(self, check: str, checked: int, violated: int) -> None:
        self.checked[check] += int(checked)
        self.violations[check] += int(violated)
        if violated:
            LOG.warning("invariant %s violated at %d of %d points", check, violated, checked)

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())

    def merge(self, other: "InvariantReport") -> "InvariantReport":
        return InvariantReport(self.checked + other.checked, self.violations + other.violations)

    def serialize(self) -> dict:
        return {
            check: {"checked": self.checked[check], "violations": self.violations[check]}
            for check in CHECKS
        }


def _check_oc(report: InvariantReport, optimal: PolicySolution) -> None:
    checked = violated = 0
    for t in range(1, optimal.horizon + 1):
        oc = optimal.oc_vector(t)
        checked += len(oc)
        violated += int(np.count_nonzero(oc < -TOLERANCE))
    report.record("oc_nonnegative", checked, violated)


def _check_records(
    report: InvariantReport,
    optimal: PolicySolution,
    rule: DecisionRule,
    records: MetricRecords,
    exact_rates: bool,
) -> None:
    report.record("regret_nonnegative", len(records), np.count_nonzero(records.regret < 0))

    # a wrong acceptance must come from underestimating the opportunity
    # cost, a wrong rejection from overestimating it
    checked = violated = 0
    for t in range(1, records.horizon + 1):
        at_t = (records.epoch == t) & (records.regret > TOLERANCE)
        masks = records.mask[at_t]
        g_star = optimal.decision_vector(t)[masks]
        g_tilde = np.asarray(rule.decision_vector(t), dtype=bool)[masks]
        wrong_accept = ~g_star & g_tilde
        wrong_reject = g_star & ~g_tilde
        checked += len(masks)
        violated += int(np.count_nonzero(wrong_accept & ~(records.e_under[at_t] > 0)))
        violated += int(np.count_nonzero(wrong_reject & ~(records.e_over[at_t] > 0)))
    report.record("sign_bracketing", checked, violated)

    ratio = weighted_error_ratio(records)
    if ratio is not None:
        report.record("error_ratio_bounds", 1, not 0.0 <= ratio <= 1.0)

    if exact_rates:
        totals = np.bincount(records.epoch, weights=records.decision_rate, minlength=records.horizon + 1)[1:]
        report.record(
            "rate_mass", len(totals), np.count_nonzero(np.abs(totals - 0.5) > RATE_TOLERANCE)
        )


def _check_decomposition(
    report: InvariantReport, optimal: PolicySolution, revenue: ValueTable, cost: ValueTable
) -> None:
    checked = violated = 0
    for t in range(optimal.horizon + 1):
        residual = optimal.table.epoch(t) - (revenue.epoch(t) + cost.epoch(t))
        checked += len(residual)
        violated += int(np.count_nonzero(np.abs(residual) > TOLERANCE))
    report.record("decomposition", checked, violated)


def check_instance_invariants(
    instance: Instance,
    optimal: PolicySolution,
    decomposition: tuple[ValueTable, ValueTable] | None = None,
    rules: Mapping[PolicyName, DecisionRule] | None = None,
    evaluations: Mapping[PolicyName, PolicyEvaluation] | None = None,
    records: Mapping[PolicyName, MetricRecords] | None = None,
    *,
    exact_rates: bool = True,
) -> InvariantReport:
    report = InvariantReport()
    _check_oc(report, optimal)

    if decomposition is not None:
        _check_decomposition(report, optimal, *decomposition)

    for policy, evaluation in (evaluations or {}).items():
        report.record("objective_bound", 1, evaluation.value > optimal.root_value + TOLERANCE)

    for policy, policy_records in (records or {}).items():
        _check_records(report, optimal, rules[policy], policy_records, exact_rates)

    if not report.ok:
        LOG.error(
            "instance %d of setting %02d violates %s",
            instance.instance_id,
            instance.setting.ordinal,
            sorted(k for k, v in report.violations.items() if v),
        )
    return report
