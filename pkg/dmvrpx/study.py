"""
Full-factorial study orchestration.

Instances are generated up front, solved independently (optionally in a
process pool) and reduced in canonical ``(setting ordinal, instance_id)``
order, so the worker count never changes an output byte.
"""

from __future__ import annotations

import logging
import traceback
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata

import numpy as np
import pandas as pd

from dmvrpx import __version__
from dmvrpx.actions import InstanceState, pipeline, run_pipeline
from dmvrpx.aggregate import (
    HeatmapMetric,
    PolicyOutcome,
    SettingSummary,
    dominance_fraction,
    summarize_setting,
)
from dmvrpx.config import StudyConfig
from dmvrpx.domain import (
    Constraint,
    Instance,
    LocationDist,
    PolicyName,
    Profitability,
    enumerate_settings,
    setting_by_ordinal,
)
from dmvrpx.instgen import generate_study_instances
from dmvrpx.invariants import InvariantReport, check_instance_invariants
from dmvrpx.store import StudyStore
from dmvrpx.viz import render_heatmap_panel, render_objective_profile, render_scatter


LOG = logging.getLogger(__name__)

SEED_SCHEME = "philox(SeedSequence([root_seed, setting_ordinal, instance_id]).generate_state(1, uint64))"

DOMINANCE_BANDS = {
    PolicyName.DPC: (0.814, 0.974),
    PolicyName.MCTS: (0.617, 0.777),
}
HIGH_DIST_GAP_LIMIT = 0.02
STALLING_SHARE = 0.6


@dataclass
class InstanceResult:
    setting: int
    instance_id: int
    j_star: float | None = None
    outcomes: dict[PolicyName, PolicyOutcome] = field(default_factory=dict)
    invariants: InvariantReport = field(default_factory=InvariantReport)
    records: dict[PolicyName, pd.DataFrame] = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def serialize(self) -> dict:
        data = {
            "setting": self.setting,
            "instance_id": self.instance_id,
            "status": "ok" if self.ok else "failed",
        }
        if self.ok:
            data["J_star"] = self.j_star
            data["J_pi"] = {p.value: o.j_pi for p, o in self.outcomes.items()}
            data["regret"] = {
                p.value: {"over": o.regret_over, "total": o.regret_total, "E": o.error_ratio}
                for p, o in self.outcomes.items()
            }
            data["invariant_violations"] = sum(self.invariants.violations.values())
        else:
            data["error"] = self.error
        return data


@dataclass
class StudyReport:
    config: StudyConfig
    summaries: list[SettingSummary]
    dominance: dict[PolicyName, float | None]
    incomplete_settings: list[int]
    invariants: InvariantReport
    checks: dict[str, dict]
    n_instances: int
    n_failed: int

    def serialize(self) -> dict:
        return {
            "root_seed": self.config.root_seed,
            "instances_per_setting": self.config.instances_per_setting,
            "policies": [p.value for p in self.config.policies],
            "settings": sorted({s.setting.ordinal for s in self.summaries}),
            "instances": self.n_instances,
            "failed_instances": self.n_failed,
            "incomplete_settings": self.incomplete_settings,
            "dominance": {p.value: f for p, f in self.dominance.items()},
            "invariants": self.invariants.serialize(),
            "checks": self.checks,
            "summaries": [s.serialize() for s in self.summaries],
        }


def process_instance(
    instance: Instance,
    policies: list[PolicyName],
    sampling_rates: int | None = None,
    keep_records: bool = False,
) -> InstanceResult:
    """Solve, evaluate and measure every policy on one instance."""
    result = InstanceResult(instance.setting.ordinal, instance.instance_id)
    try:
        state = run_pipeline(InstanceState.start(instance), pipeline(policies, sampling_rates))
        optimal = state["optimal"]
        result.j_star = optimal.root_value
        result.outcomes = {p: state.for_policy("outcome", p) for p in policies}
        result.invariants = check_instance_invariants(
            instance,
            optimal,
            state["decomposition"],
            rules={p: state.for_policy("rule", p) for p in policies},
            evaluations={p: state.for_policy("evaluation", p) for p in policies},
            records={p: state.for_policy("records", p) for p in policies},
            exact_rates=sampling_rates is None,
        )
        if keep_records:
            result.records = {p: state.for_policy("records", p).to_frame() for p in policies}
    except Exception as exc:
        LOG.error(
            "instance %d of setting %02d failed: %s",
            instance.instance_id,
            instance.setting.ordinal,
            exc,
        )
        LOG.debug("%s", traceback.format_exc())
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def _process(args: tuple) -> InstanceResult:
    return process_instance(*args)


def _run_instances(instances: list[Instance], config: StudyConfig) -> list[InstanceResult]:
    jobs = [
        (instance, config.policies, config.sampling_rates, config.dump_metrics)
        for instance in instances
    ]
    if config.workers == 1:
        return [_process(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        # map keeps submission order
        return list(pool.map(_process, jobs, chunksize=max(1, len(jobs) // (4 * config.workers))))


def _mean_or_none(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def acceptance_checks(
    summaries: list[SettingSummary], dominance: dict[PolicyName, float | None]
) -> dict[str, dict]:
    """Study-level pattern checks; ``passed`` is None when the study lacks the settings."""
    checks: dict[str, dict] = {}

    for policy, (lo, hi) in DOMINANCE_BANDS.items():
        value = dominance.get(policy)
        checks[f"{policy.value}_dominance"] = {
            "value": value,
            "band": [lo, hi],
            "passed": None if value is None else lo <= value <= hi,
        }

    dpc = [s for s in summaries if s.policy is PolicyName.DPC]
    high_dist = _mean_or_none(
        [
            s.mean_gap
            for s in dpc
            if s.setting.profitability is Profitability.HIGH
            and s.setting.constraint is Constraint.DIST
        ]
    )
    checks["dpc_high_dist_gap"] = {
        "value": high_dist,
        "limit": HIGH_DIST_GAP_LIMIT,
        "passed": None if high_dist is None else high_dist < HIGH_DIST_GAP_LIMIT,
    }

    low_load = [
        s
        for s in dpc
        if s.setting.profitability is Profitability.LOW and s.setting.constraint is Constraint.LOAD
    ]
    negative = [s.setting.ordinal for s in low_load if s.mean_objective < 0]
    checks["dpc_low_load_negative_objective"] = {
        "settings": negative,
        "passed": None if not low_load else bool(negative),
    }

    stalling = {
        s.setting.ordinal: s.heatmaps[HeatmapMetric.DECISION_RATE].column_share(0)
        for s in summaries
        if s.policy is PolicyName.MCTS
        and s.setting.profitability is Profitability.LOW
        and s.setting.location_dist is LocationDist.CLUST_SORT
        and HeatmapMetric.DECISION_RATE in s.heatmaps
    }
    best = max(stalling.values()) if stalling else None
    checks["mcts_stalling"] = {
        "max_empty_column_share": best,
        "threshold": STALLING_SHARE,
        "passed": None if best is None else best >= STALLING_SHARE,
    }
    return checks


def manifest(config: StudyConfig) -> dict:
    versions = {"dmvrpx": __version__}
    for package in ("numpy", "pandas", "matplotlib", "pydantic", "actionpack"):
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = None
    return {
        "config": config.manifest_view(),
        "versions": versions,
        "seed_scheme": SEED_SCHEME,
    }


def run_study(config: StudyConfig) -> StudyReport:
    store = StudyStore(config.out_dir)
    settings = (
        [setting_by_ordinal(o) for o in config.settings]
        if config.settings is not None
        else enumerate_settings()
    )

    instances = list(
        generate_study_instances(config.root_seed, config.instances_per_setting, settings)
    )
    for instance in instances:
        store.write_instance(instance)
    LOG.info(
        "generated %d instances over %d settings (root seed %d)",
        len(instances),
        len(settings),
        config.root_seed,
    )

    results = _run_instances(instances, config)
    results.sort(key=lambda r: (r.setting, r.instance_id))
    store.write_outcomes(r.serialize() for r in results)

    invariants = InvariantReport()
    by_setting: dict[int, list[InstanceResult]] = defaultdict(list)
    for result in results:
        by_setting[result.setting].append(result)
        invariants = invariants.merge(result.invariants)
        for policy, frame in result.records.items():
            store.write_records(result.setting, result.instance_id, policy, frame)

    summaries: list[SettingSummary] = []
    incomplete: list[int] = []
    for setting in settings:
        setting_results = by_setting[setting.ordinal]
        succeeded = [r for r in setting_results if r.ok]
        if len(succeeded) < config.instances_per_setting:
            incomplete.append(setting.ordinal)
        if not succeeded:
            LOG.error("setting %02d has no successful instance", setting.ordinal)
            continue
        for policy in config.policies:
            summaries.append(
                summarize_setting(setting, policy, [r.outcomes[policy] for r in succeeded])
            )
        LOG.info("setting %02d summarized (%s)", setting.ordinal, setting.label)

    dominance = {
        policy: dominance_fraction([s for s in summaries if s.policy is policy])
        for policy in config.policies
    }

    store.write_summaries(summaries)
    for summary in summaries:
        store.write_heatmaps(summary)

    if config.figures:
        write_figures(store, summaries)

    report = StudyReport(
        config=config,
        summaries=summaries,
        dominance=dominance,
        incomplete_settings=incomplete,
        invariants=invariants,
        checks=acceptance_checks(summaries, dominance),
        n_instances=len(results),
        n_failed=sum(not r.ok for r in results),
    )
    store.write_json("report.json", report.serialize())
    store.write_json("manifest.json", manifest(config))

    LOG.info(
        "study done: %d instances, %d failed, dominance %s",
        report.n_instances,
        report.n_failed,
        {p.value: f for p, f in dominance.items()},
    )
    return report


def write_figures(store: StudyStore, summaries: list[SettingSummary]) -> None:
    for summary in summaries:
        store.write_figure(
            f"heatmap_{summary.setting.ordinal:02d}_{summary.policy.value}.svg",
            render_heatmap_panel(summary.setting, summary.policy, summary.heatmaps),
        )
    store.write_figure("error_ratio_scatter.svg", render_scatter(summaries))
    store.write_figure("objective_profile.svg", render_objective_profile(summaries))
