"""
Exact backward recursions over order sets.

All solvers share one specialized recursion. Terminal values fold in the
routing cost of the final order set, ``W_T(A) = -c_f * L(A)`` (zero for the
revenue-only table), and for ``t = T..1`` over ``A`` within ``{1..t-1}``:

    W_{t-1}(A) = W_t(A) + 0.5 * g * gain,    Delta_t(A) = W_t(A) - W_t(A + t)

where ``g`` accepts iff ``A + t`` is feasible and ``r_t - Delta >= 0``
(ties accept, within ``TOLERANCE``). The optimal and revenue-only
recursions use ``gain = r_t - Delta``; the cost-only recursion decides on
``r_t - Delta`` but propagates ``gain = -Delta``.

Because customer ``t`` owns bit ``t - 1``, the states at epoch ``t`` are the
first ``2**(t-1)`` masks and their accept successors the next ``2**(t-1)``,
so each epoch is a pair of array slices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from dmvrpx.domain import (
    ARRIVAL_PROBABILITY,
    TOLERANCE,
    Instance,
    OrderSet,
    ValueKind,
    ValueTable,
)
from dmvrpx.errors import ContractViolation
from dmvrpx.routing import route_table

if TYPE_CHECKING:
    from dmvrpx.policies import DecisionRule


LOG = logging.getLogger(__name__)


class SolutionKind(Enum):
    OPTIMAL = "optimal"
    DPC = "dpc"
    MCTS = "mcts"


_TABLE_KINDS = {
    SolutionKind.OPTIMAL: ValueKind.OPTIMAL,
    SolutionKind.DPC: ValueKind.DPC,
    SolutionKind.MCTS: ValueKind.MCTS,
}


def _decision_shape(horizon: int) -> tuple[int, int]:
    return (horizon + 1, 1 << (horizon - 1))


def check_decision_point(
    horizon: int, t: int, mask: int, feasible: np.ndarray | None = None
) -> None:
    """Fail fast on a state that is outside epoch ``t`` or breaks the vehicle limit."""
    if not 1 <= t <= horizon or not 0 <= mask < 1 << (t - 1):
        raise ContractViolation(
            f"no decision at epoch {t} for mask {mask}: "
            f"states at epoch t are subsets of customers 1..t-1"
        )
    if feasible is not None and not feasible[mask]:
        raise ContractViolation(f"no decision at epoch {t} for mask {mask}: order set is infeasible")


@dataclass(frozen=True, eq=False)
class PolicySolution:
    """
    A solved recursion: its value table, the accept decision and the
    opportunity-cost estimate at every decision point ``(t, A)``.

    ``decisions`` and ``oc`` have shape ``(T + 1, 2**(T-1))``; row ``t``
    holds epoch ``t`` on its first ``2**(t-1)`` entries, row 0 is unused.
    """

    kind: SolutionKind
    instance: Instance
    table: ValueTable
    decisions: np.ndarray = field(repr=False)
    oc: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.decisions, self.oc):
            arr.setflags(write=False)

    @property
    def horizon(self) -> int:
        return self.instance.horizon

    @property
    def root_value(self) -> float:
        return self.table[0, 0]

    def decision_vector(self, t: int) -> np.ndarray:
        return self.decisions[t, : 1 << (t - 1)]

    def oc_vector(self, t: int) -> np.ndarray:
        return self.oc[t, : 1 << (t - 1)]

    def decision(self, t: int, state: OrderSet) -> int:
        check_decision_point(self.horizon, t, state.mask, route_table(self.instance).feasible)
        return int(self.decisions[t, state.mask])

    def oc_estimate(self, t: int, state: OrderSet) -> float:
        check_decision_point(self.horizon, t, state.mask, route_table(self.instance).feasible)
        return float(self.oc[t, state.mask])


@dataclass(frozen=True, eq=False)
class PolicyEvaluation:
    table: ValueTable
    value: float
    infeasible_acceptances: int = 0


def _terminal_cost(instance: Instance) -> np.ndarray:
    return -instance.cost_factor * route_table(instance).lengths


def _solve(
    instance: Instance,
    kind: SolutionKind,
    terminal: np.ndarray,
    *,
    propagate_revenue: bool,
) -> PolicySolution:
    horizon = instance.horizon
    n = 1 << horizon
    feasible = route_table(instance).feasible
    revenues = instance.revenues

    values = np.full((horizon + 1, n), np.nan)
    values[horizon] = terminal
    decisions = np.zeros(_decision_shape(horizon), dtype=bool)
    oc = np.full(_decision_shape(horizon), np.nan)

    for t in range(horizon, 0, -1):
        half = 1 << (t - 1)
        reject = values[t, :half]
        accept = values[t, half : 2 * half]
        delta = reject - accept
        margin = revenues[t - 1] - delta
        g = feasible[half : 2 * half] & (margin >= -TOLERANCE)
        gain = margin if propagate_revenue else -delta

        values[t - 1, :half] = reject + ARRIVAL_PROBABILITY * np.where(g, gain, 0.0)
        decisions[t, :half] = g
        oc[t, :half] = delta

    solution = PolicySolution(
        kind=kind,
        instance=instance,
        table=ValueTable(_TABLE_KINDS[kind], values, feasible),
        decisions=decisions,
        oc=oc,
    )
    LOG.debug(
        "solved %s for instance %d: root value %.6f",
        kind.value,
        instance.instance_id,
        solution.root_value,
    )
    return solution


def solve_optimal(instance: Instance) -> PolicySolution:
    return _solve(
        instance, SolutionKind.OPTIMAL, _terminal_cost(instance), propagate_revenue=True
    )


def solve_dpc(instance: Instance) -> PolicySolution:
    """Displacement-cost recursion: revenues only, routing cost ignored."""
    return _solve(
        instance,
        SolutionKind.DPC,
        np.zeros(1 << instance.horizon),
        propagate_revenue=True,
    )


def solve_mcts(instance: Instance) -> PolicySolution:
    """Marginal cost-to-serve recursion: routing cost only, revenue only in decisions."""
    return _solve(
        instance, SolutionKind.MCTS, _terminal_cost(instance), propagate_revenue=False
    )


def _propagate(
    instance: Instance,
    decide,
    terminal: np.ndarray,
    *,
    with_revenue: bool,
) -> tuple[np.ndarray, int]:
    """
    Value of following fixed decisions under the true dynamics.
    Returns the table values and the number of infeasible acceptances.
    """
    horizon = instance.horizon
    feasible = route_table(instance).feasible
    revenues = instance.revenues

    values = np.full((horizon + 1, 1 << horizon), np.nan)
    values[horizon] = terminal
    infeasible = 0

    for t in range(horizon, 0, -1):
        half = 1 << (t - 1)
        g = np.asarray(decide(t), dtype=bool)
        infeasible += int(np.count_nonzero(g & ~feasible[half : 2 * half]))

        reject = values[t, :half]
        accept = values[t, half : 2 * half]
        gain = accept - reject
        if with_revenue:
            gain = gain + revenues[t - 1]
        values[t - 1, :half] = reject + ARRIVAL_PROBABILITY * np.where(g, gain, 0.0)

    return values, infeasible


def evaluate_policy(rule: "DecisionRule", instance: Instance) -> PolicyEvaluation:
    """Exact expected true profit of following ``rule`` on ``instance``."""
    values, infeasible = _propagate(
        instance,
        rule.decision_vector,
        _terminal_cost(instance),
        with_revenue=True,
    )
    if infeasible:
        LOG.warning(
            "rule %s accepts %d infeasible requests on instance %d",
            rule.name,
            infeasible,
            instance.instance_id,
        )
    table = ValueTable(ValueKind.POLICY_VALUE, values, route_table(instance).feasible)
    return PolicyEvaluation(table=table, value=table[0, 0], infeasible_acceptances=infeasible)


def decompose_optimal(
    optimal: PolicySolution, instance: Instance
) -> tuple[ValueTable, ValueTable]:
    """
    Split the optimal values along the optimal decisions into a revenue
    share ``R*`` and a routing cost share ``F*`` with ``V = R* + F*``.
    """
    if optimal.kind is not SolutionKind.OPTIMAL:
        raise ValueError(f"decomposition needs the optimal solution, got {optimal.kind.value}")

    revenue, _ = _propagate(
        instance,
        optimal.decision_vector,
        np.zeros(1 << instance.horizon),
        with_revenue=True,
    )
    cost, _ = _propagate(
        instance,
        optimal.decision_vector,
        _terminal_cost(instance),
        with_revenue=False,
    )
    feasible = route_table(instance).feasible
    return (
        ValueTable(ValueKind.REVENUE_SHARE, revenue, feasible),
        ValueTable(ValueKind.COST_SHARE, cost, feasible),
    )


def solve(kind: SolutionKind, instance: Instance) -> PolicySolution:
    return _SOLVERS[kind](instance)


_SOLVERS = {
    SolutionKind.OPTIMAL: solve_optimal,
    SolutionKind.DPC: solve_dpc,
    SolutionKind.MCTS: solve_mcts,
}
