"""
Per-instance pipeline as actionpack actions.

Actions share one mutable ``InstanceState``: each reads what earlier
actions produced and returns a dict of new entries, which the runner
applies before the next action executes.
"""

from __future__ import annotations

import logging
from typing import Any, Iterable

from actionpack import Action
from actionpack.procedure import KeyedProcedure

from dmvrpx.aggregate import PolicyOutcome, build_heatmaps
from dmvrpx.domain import Instance, PolicyName
from dmvrpx.dp import decompose_optimal, evaluate_policy, solve_optimal
from dmvrpx.instgen import derive_seed
from dmvrpx.metrics import (
    compute_errors,
    decision_rates,
    error_ratio_terms,
    optimality_gap,
    sample_decision_rates,
)
from dmvrpx.policies import build_rule


LOG = logging.getLogger(__name__)


class InstanceState(dict):
    """Working state of one instance; keys are ``name`` or ``name:policy``."""

    @classmethod
    def start(cls, instance: Instance) -> "InstanceState":
        return cls(instance=instance)

    @property
    def instance(self) -> Instance:
        return self["instance"]

    def for_policy(self, name: str, policy: PolicyName) -> Any:
        return self[f"{name}:{policy.value}"]


class StudyAction(Action):
    """
    Immutable Action template; ``materialize`` binds a copy to the state
    of one instance.
    """

    _state: InstanceState | None = None

    @property
    def state(self) -> InstanceState:
        if self._state is None:
            raise RuntimeError(f"{self.__class__.__name__} requires state but none was bound")
        return self._state

    def _clone(self) -> "StudyAction":
        clone = type(self)()
        clone.name = self.name or self.__class__.__name__
        return clone

    def materialize(self, state: InstanceState) -> "StudyAction":
        action = self._clone()
        action._state = state
        return action


class PolicyAction(StudyAction):
    """An action parameterized by the policy it works on."""

    def __init__(self, policy: PolicyName):
        self.policy = policy
        self.name = f"{self.__class__.__name__}:{policy.value}"

    def _clone(self) -> "PolicyAction":
        clone = type(self)(self.policy)
        clone.name = self.name
        return clone

    def key(self, name: str) -> str:
        return f"{name}:{self.policy.value}"


class SolveOptimal(StudyAction):
    def instruction(self) -> dict:
        instance = self.state.instance
        optimal = solve_optimal(instance)
        return {
            "optimal": optimal,
            "decomposition": decompose_optimal(optimal, instance),
        }


class SolvePolicy(PolicyAction):
    def instruction(self) -> dict:
        rule = build_rule(self.policy, self.state.instance, self.state["optimal"])
        return {self.key("rule"): rule}


class EvaluatePolicy(PolicyAction):
    def instruction(self) -> dict:
        rule = self.state.for_policy("rule", self.policy)
        return {self.key("evaluation"): evaluate_policy(rule, self.state.instance)}


class MeasurePolicy(PolicyAction):
    """Decision rates, metric records and the heatmaps of one policy."""

    def __init__(self, policy: PolicyName, sampling_rates: int | None = None):
        super().__init__(policy)
        self.sampling_rates = sampling_rates

    def _clone(self) -> "MeasurePolicy":
        clone = MeasurePolicy(self.policy, self.sampling_rates)
        clone.name = self.name
        return clone

    def instruction(self) -> dict:
        instance = self.state.instance
        optimal = self.state["optimal"]
        rule = self.state.for_policy("rule", self.policy)

        if self.sampling_rates is None:
            rates = decision_rates(rule, instance)
        else:
            seed = derive_seed(instance.seed, list(PolicyName).index(self.policy))
            rates = sample_decision_rates(rule, instance, self.sampling_rates, seed)

        records = compute_errors(optimal, rule, instance, rates)
        over, total = error_ratio_terms(records)
        j_star = optimal.root_value
        j_pi = self.state.for_policy("evaluation", self.policy).value

        outcome = PolicyOutcome(
            instance_id=instance.instance_id,
            j_star=j_star,
            j_pi=j_pi,
            gap=optimality_gap(j_star, j_pi),
            regret_over=over,
            regret_total=total,
            heatmaps=build_heatmaps(records),
        )
        return {self.key("records"): records, self.key("outcome"): outcome}


def pipeline(
    policies: Iterable[PolicyName], sampling_rates: int | None = None
) -> list[StudyAction]:
    actions: list[StudyAction] = [SolveOptimal()]
    for policy in policies:
        actions += [
            SolvePolicy(policy),
            EvaluatePolicy(policy),
            MeasurePolicy(policy, sampling_rates),
        ]
    return actions


def run_pipeline(state: InstanceState, actions: Iterable[StudyAction]) -> InstanceState:
    """
    Execute the actions in order, applying each result eagerly. The first
    failing action stops the instance and its exception is re-raised.
    """
    procedure = KeyedProcedure([action.materialize(state) for action in actions])
    for name, result in procedure.execute(should_raise=False):
        if not result.successful:
            LOG.debug("action %s failed on instance %d", name, state.instance.instance_id)
            if isinstance(result.value, BaseException):
                raise result.value
            raise RuntimeError(f"action {name} failed: {result.value!r}")
        if isinstance(result.value, dict):
            state.update(result.value)
    return state
