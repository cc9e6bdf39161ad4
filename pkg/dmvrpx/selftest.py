"""
Oracle suite behind ``dmvrpx selftest``.

The recursions are checked against computations that share none of their
machinery: tours by enumerating visiting orders, optimal values by
expectimax over every demand realization and decision sequence, decision
rates by simulation.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from dmvrpx.domain import (
    ARRIVAL_PROBABILITY,
    DEPOT,
    SEGMENT,
    TOLERANCE,
    Constraint,
    Instance,
    PolicyName,
    enumerate_settings,
    setting_by_ordinal,
)
from dmvrpx.dp import decompose_optimal, solve_optimal
from dmvrpx.instgen import StreamRng, derive_seed, generate_from_seed, generate_instance
from dmvrpx.invariants import InvariantReport
from dmvrpx.metrics import binomial_outlier_share, decision_rates, sample_decision_rates
from dmvrpx.policies import build_rule
from dmvrpx.routing import optimal_tour_length
from dmvrpx.study import process_instance


LOG = logging.getLogger(__name__)

ORACLE_TOLERANCE = 1e-9
MAX_ORACLE_HORIZON = 6
SMOKE_SETTINGS = (0, 13, 26, 39, 52, 65)
RATE_SIGMAS = 3.0
# share of reachable decision points allowed outside the band
RATE_OUTLIER_SHARE = 0.05


def permutation_tour_length(locations: Sequence[float]) -> float:
    """Shortest closed depot tour, by trying every visiting order."""
    best = math.inf
    for order in itertools.permutations(locations):
        length, here = 0.0, DEPOT
        for point in order:
            length += abs(point - here)
            here = point
        best = min(best, length + abs(here - DEPOT))
    return 0.0 if best is math.inf else best


def brute_force_value(instance: Instance) -> float:
    """
    Expected profit of the best decision tree, by expectimax over every
    arrival realization and every accept/reject sequence.
    """
    if instance.horizon > MAX_ORACLE_HORIZON:
        raise ValueError(
            f"brute force is limited to horizon {MAX_ORACLE_HORIZON}, got {instance.horizon}"
        )
    customers = instance.customers
    constraint = instance.setting.constraint

    @lru_cache(maxsize=None)
    def tour(accepted: frozenset[int]) -> float:
        return permutation_tour_length([customers[c - 1].location for c in sorted(accepted)])

    def feasible(accepted: frozenset[int]) -> bool:
        if constraint is Constraint.LOAD:
            return len(accepted) <= constraint.limit
        return tour(accepted) <= constraint.limit + TOLERANCE

    def best(t: int, accepted: frozenset[int]) -> float:
        if t > instance.horizon:
            return -instance.cost_factor * tour(accepted)
        no_request = best(t + 1, accepted)
        options = [no_request]
        grown = accepted | {t}
        if feasible(grown):
            options.append(customers[t - 1].revenue + best(t + 1, grown))
        return (1 - ARRIVAL_PROBABILITY) * no_request + ARRIVAL_PROBABILITY * max(options)

    return best(1, frozenset())


@dataclass(frozen=True)
class SelftestCheck:
    name: str
    passed: bool
    value: float | int | None = None
    detail: str = ""

    def serialize(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": self.value, "detail": self.detail}


@dataclass
class SelftestReport:
    checks: list[SelftestCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: SelftestCheck) -> None:
        level = logging.INFO if check.passed else logging.ERROR
        LOG.log(level, "%s: %s (%s)", check.name, "ok" if check.passed else "FAILED", check.value)
        self.checks.append(check)

    def serialize(self) -> dict:
        return {"ok": self.ok, "checks": [c.serialize() for c in self.checks]}


def oracle_instances(seed: int, n: int) -> list[Instance]:
    """Random small instances across every setting, horizons 3..6."""
    catalogue = enumerate_settings()
    rng = StreamRng.generator(derive_seed(seed, 1))
    instances = []
    for i in range(n):
        setting = catalogue[int(rng.integers(len(catalogue)))]
        horizon = int(rng.integers(3, MAX_ORACLE_HORIZON + 1))
        small = replace(setting, horizon=horizon)
        instances.append(generate_from_seed(small, i, derive_seed(seed, 2, i)))
    return instances


def check_oracle(seed: int, n: int) -> SelftestCheck:
    worst = 0.0
    for instance in oracle_instances(seed, n):
        worst = max(worst, abs(solve_optimal(instance).root_value - brute_force_value(instance)))
    return SelftestCheck(
        "optimal_value_oracle",
        worst <= ORACLE_TOLERANCE,
        worst,
        f"{n} instances, horizons 3..{MAX_ORACLE_HORIZON}",
    )


def check_tours(seed: int, n_sets: int, set_size: int = 8) -> SelftestCheck:
    rng = StreamRng.generator(derive_seed(seed, 3))
    worst = 0.0
    for _ in range(n_sets):
        points = [float(x) for x in rng.uniform(*SEGMENT, size=set_size)]
        for size in range(set_size + 1):
            for subset in itertools.combinations(points, size):
                worst = max(worst, abs(optimal_tour_length(subset) - permutation_tour_length(subset)))
    return SelftestCheck(
        "tour_oracle", worst <= ORACLE_TOLERANCE, worst, f"{n_sets} sets of {set_size} points"
    )


def check_decomposition(root_seed: int, per_setting: int) -> SelftestCheck:
    """``V = R* + F*`` everywhere and ``dV = dR* + dF*`` at every decision point."""
    worst = 0.0
    for ordinal in SMOKE_SETTINGS:
        for instance_id in range(per_setting):
            instance = generate_instance(setting_by_ordinal(ordinal), instance_id, root_seed)
            optimal = solve_optimal(instance)
            revenue, cost = decompose_optimal(optimal, instance)
            for t in range(instance.horizon + 1):
                residual = optimal.table.epoch(t) - revenue.epoch(t) - cost.epoch(t)
                worst = max(worst, float(np.max(np.abs(residual))))
            for t in range(1, instance.horizon + 1):
                half = 1 << (t - 1)
                d_rev = revenue.values[t, :half] - revenue.values[t, half : 2 * half]
                d_cost = cost.values[t, :half] - cost.values[t, half : 2 * half]
                worst = max(worst, float(np.max(np.abs(optimal.oc_vector(t) - d_rev - d_cost))))
    return SelftestCheck(
        "decomposition_identity",
        worst <= ORACLE_TOLERANCE,
        worst,
        f"settings {list(SMOKE_SETTINGS)}, {per_setting} instances each",
    )


def check_invariants(root_seed: int, per_setting: int) -> SelftestCheck:
    report = InvariantReport()
    for ordinal in SMOKE_SETTINGS:
        for instance_id in range(per_setting):
            instance = generate_instance(setting_by_ordinal(ordinal), instance_id, root_seed)
            result = process_instance(instance, list(PolicyName))
            if not result.ok:
                return SelftestCheck("invariant_suite", False, None, result.error or "")
            report = report.merge(result.invariants)
    violations = sum(report.violations.values())
    failing = sorted(k for k, v in report.violations.items() if v)
    return SelftestCheck("invariant_suite", report.ok, violations, ", ".join(failing))


def check_rate_fidelity(root_seed: int, pairs: int, n_paths: int) -> SelftestCheck:
    rng = StreamRng.generator(derive_seed(root_seed, 4))
    catalogue = enumerate_settings()
    worst = 0.0
    for i in range(pairs):
        setting = catalogue[int(rng.integers(len(catalogue)))]
        instance = generate_instance(setting, i, root_seed)
        rule = build_rule(list(PolicyName)[i % len(PolicyName)], instance)
        exact = decision_rates(rule, instance)
        sampled = sample_decision_rates(rule, instance, n_paths, derive_seed(root_seed, 5, i))
        worst = max(worst, binomial_outlier_share(exact, sampled, n_paths, RATE_SIGMAS))
    return SelftestCheck(
        "rate_fidelity",
        worst <= RATE_OUTLIER_SHARE,
        worst,
        f"{pairs} instance/policy pairs, {n_paths} paths, {RATE_SIGMAS:g} sigma",
    )


def run_selftest(
    seed: int = 42,
    oracle_instances_n: int = 200,
    tour_sets: int = 50,
    smoke_instances: int = 2,
    rate_pairs: int = 10,
    rate_paths: int = 100_000,
) -> SelftestReport:
    report = SelftestReport()
    report.add(check_tours(seed, tour_sets))
    report.add(check_oracle(seed, oracle_instances_n))
    report.add(check_decomposition(seed, smoke_instances))
    report.add(check_invariants(seed, smoke_instances))
    report.add(check_rate_fidelity(seed, rate_pairs, rate_paths))
    return report
