"""
Decision rules: one interface over the solved recursions, the myopic
benchmark and the trivial reference rules.

A rule is bound to one instance. It exposes its opportunity-cost estimate
and its accept decision per epoch as vectors over every state at that epoch
(masks below ``2**(t-1)``), plus scalar accessors for single states.
Unless a rule overrides it, the decision is the standard threshold: accept
iff the request is feasible and ``r_t - oc >= 0``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from dmvrpx.domain import TOLERANCE, Instance, OrderSet, PolicyName
from dmvrpx.dp import PolicySolution, check_decision_point, solve_dpc, solve_mcts, solve_optimal
from dmvrpx.routing import route_table


class DecisionRule(ABC):
    def __init__(self, name: str, instance: Instance):
        self.name = name
        self.instance = instance

    @abstractmethod
    def oc_vector(self, t: int) -> np.ndarray: ...

    def feasible_vector(self, t: int) -> np.ndarray:
        half = 1 << (t - 1)
        return route_table(self.instance).feasible[half : 2 * half]

    def decision_vector(self, t: int) -> np.ndarray:
        revenue = self.instance.customer(t).revenue
        return self.feasible_vector(t) & (revenue - self.oc_vector(t) >= -TOLERANCE)

    def _check(self, t: int, state: OrderSet) -> None:
        feasible = route_table(self.instance).feasible
        check_decision_point(self.instance.horizon, t, state.mask, feasible)

    def oc(self, t: int, state: OrderSet) -> float:
        self._check(t, state)
        return float(self.oc_vector(t)[state.mask])

    def decide(self, t: int, state: OrderSet) -> int:
        self._check(t, state)
        return int(self.decision_vector(t)[state.mask])

    def __repr__(self) -> str:
        return f"<{type(self).__name__} name={self.name} instance={self.instance.instance_id}>"


class SolutionRule(DecisionRule):
    """Replays the decisions and estimates stored in a solved recursion."""

    def __init__(self, solution: PolicySolution):
        super().__init__(solution.kind.value, solution.instance)
        self.solution = solution

    def oc_vector(self, t: int) -> np.ndarray:
        return self.solution.oc_vector(t)

    def decision_vector(self, t: int) -> np.ndarray:
        return self.solution.decision_vector(t)


class MyopicRule(DecisionRule):
    """
    Opportunity cost = routing cost of inserting the request into the
    re-optimized tour of the confirmed orders.
    """

    def __init__(self, instance: Instance):
        super().__init__("myopic", instance)

    def oc_vector(self, t: int) -> np.ndarray:
        half = 1 << (t - 1)
        lengths = route_table(self.instance).lengths
        return self.instance.cost_factor * (lengths[half : 2 * half] - lengths[:half])


class ConstantRule(DecisionRule):
    """Accepts every feasible request, or rejects everything."""

    def __init__(self, instance: Instance, accept: bool):
        super().__init__("accept_feasible" if accept else "reject_all", instance)
        self.accept = accept

    def oc_vector(self, t: int) -> np.ndarray:
        return np.full(1 << (t - 1), 0.0 if self.accept else np.inf)

    def decision_vector(self, t: int) -> np.ndarray:
        if self.accept:
            return self.feasible_vector(t).copy()
        return np.zeros(1 << (t - 1), dtype=bool)


def as_rule(solution: PolicySolution) -> DecisionRule:
    return SolutionRule(solution)


def myopic_rule(instance: Instance) -> DecisionRule:
    return MyopicRule(instance)


def reject_all_rule(instance: Instance) -> DecisionRule:
    return ConstantRule(instance, accept=False)


def accept_feasible_rule(instance: Instance) -> DecisionRule:
    return ConstantRule(instance, accept=True)


def build_rule(
    policy: PolicyName, instance: Instance, optimal: PolicySolution | None = None
) -> DecisionRule:
    """The rule a named policy follows on ``instance``; reuses ``optimal`` if given."""
    if policy is PolicyName.OPTIMAL:
        return as_rule(optimal if optimal is not None else solve_optimal(instance))
    if policy is PolicyName.DPC:
        return as_rule(solve_dpc(instance))
    if policy is PolicyName.MCTS:
        return as_rule(solve_mcts(instance))
    return myopic_rule(instance)
