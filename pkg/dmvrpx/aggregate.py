"""
State-space aggregation: decision points are binned by epoch and capacity
consumption into ``T x 10`` lookup tables, and instances are averaged into
setting-level summaries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Protocol, Sequence

import numpy as np
import pandas as pd

from dmvrpx.domain import Constraint, Instance, OrderSet, PolicyName, Setting
from dmvrpx.routing import route_table


LOG = logging.getLogger(__name__)

N_BUCKETS = 10
BUCKET_WIDTH = 100.0 / N_BUCKETS
DOMINANCE_THRESHOLD = 0.5

HEATMAP_COLUMNS = ("t", "bucket_lo", "bucket_hi", "mean_or_sum", "count")


class HeatmapMetric(Enum):
    E_OVER = "e_over"
    E_UNDER = "e_under"
    REGRET_OVER = "regret_over"
    REGRET_UNDER = "regret_under"
    DECISION_RATE = "decision_rate"

    @property
    def is_rate(self) -> bool:
        return self is HeatmapMetric.DECISION_RATE


def capacity_pct_vector(masks: np.ndarray, instance: Instance) -> np.ndarray:
    routes = route_table(instance)
    constraint = instance.setting.constraint
    used = routes.sizes[masks] if constraint is Constraint.LOAD else routes.lengths[masks]
    return np.clip(100.0 * used / constraint.limit, 0.0, 100.0)


def capacity_pct(order_set: OrderSet, instance: Instance) -> float:
    """Share of the vehicle's capacity (orders or tour length) used by ``order_set``."""
    return float(capacity_pct_vector(np.array([order_set.mask]), instance)[0])


def capacity_bucket(pct: np.ndarray | float) -> np.ndarray:
    # 100 % belongs to the top bucket
    return np.minimum((np.asarray(pct) // BUCKET_WIDTH).astype(np.int64), N_BUCKETS - 1)


@dataclass(frozen=True, eq=False)
class Heatmap:
    """
    One lookup table: row ``t - 1`` is decision epoch ``t``, column ``b``
    covers capacity ``[10b, 10b + 10)`` percent. Magnitude tables hold cell
    means (``nan`` where no record falls); the rate table holds summed rates.
    """

    metric: HeatmapMetric
    values: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != self.counts.shape or self.values.shape[1] != N_BUCKETS:
            raise ValueError(
                f"heatmap grids must be (T, {N_BUCKETS}), got {self.values.shape} and {self.counts.shape}"
            )
        for arr in (self.values, self.counts):
            arr.setflags(write=False)

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    @classmethod
    def empty(cls, metric: HeatmapMetric, horizon: int) -> "Heatmap":
        fill = 0.0 if metric.is_rate else np.nan
        return cls(
            metric,
            np.full((horizon, N_BUCKETS), fill),
            np.zeros((horizon, N_BUCKETS), dtype=np.int64),
        )

    def cell(self, t: int, bucket: int) -> tuple[float, int]:
        return float(self.values[t - 1, bucket]), int(self.counts[t - 1, bucket])

    def total(self) -> float:
        return float(np.nansum(self.values))

    def column_share(self, bucket: int) -> float:
        """Share of the grid total held by one capacity column."""
        total = self.total()
        if total <= 0.0:
            return 0.0
        return float(np.nansum(self.values[:, bucket]) / total)

    def to_frame(self) -> pd.DataFrame:
        t, bucket = np.meshgrid(
            np.arange(1, self.horizon + 1), np.arange(N_BUCKETS), indexing="ij"
        )
        bucket = bucket.ravel()
        return pd.DataFrame(
            {
                "t": t.ravel(),
                "bucket_lo": bucket * BUCKET_WIDTH,
                "bucket_hi": (bucket + 1) * BUCKET_WIDTH,
                "mean_or_sum": self.values.ravel(),
                "count": self.counts.ravel(),
            },
            columns=list(HEATMAP_COLUMNS),
        )

    @classmethod
    def from_frame(cls, metric: HeatmapMetric, frame: pd.DataFrame) -> "Heatmap":
        horizon = int(frame["t"].max())
        values = np.full((horizon, N_BUCKETS), np.nan)
        counts = np.zeros((horizon, N_BUCKETS), dtype=np.int64)
        rows = frame["t"].to_numpy(dtype=np.int64) - 1
        cols = capacity_bucket(frame["bucket_lo"].to_numpy(dtype=float))
        values[rows, cols] = frame["mean_or_sum"].to_numpy(dtype=float)
        counts[rows, cols] = frame["count"].to_numpy(dtype=np.int64)
        if metric.is_rate:
            values = np.nan_to_num(values, nan=0.0)
        return cls(metric, values, counts)


class RecordColumns(Protocol):
    horizon: int
    epoch: np.ndarray
    capacity_pct: np.ndarray
    e_over: np.ndarray
    e_under: np.ndarray
    regret_over: np.ndarray
    regret_under: np.ndarray
    decision_rate: np.ndarray


def build_heatmaps(records: RecordColumns) -> dict[HeatmapMetric, Heatmap]:
    """Bin one policy's records on one instance into the five lookup tables."""
    horizon = records.horizon
    rows = np.asarray(records.epoch, dtype=np.int64) - 1
    cols = capacity_bucket(records.capacity_pct)

    counts = np.zeros((horizon, N_BUCKETS), dtype=np.int64)
    np.add.at(counts, (rows, cols), 1)

    heatmaps = {}
    for metric in HeatmapMetric:
        sums = np.zeros((horizon, N_BUCKETS))
        np.add.at(sums, (rows, cols), np.asarray(getattr(records, metric.value), dtype=float))
        if metric.is_rate:
            values = sums
        else:
            with np.errstate(invalid="ignore", divide="ignore"):
                values = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
        heatmaps[metric] = Heatmap(metric, values, counts.copy())
    return heatmaps


def average_heatmaps(heatmaps: Sequence[Heatmap]) -> Heatmap:
    """
    Pool per-instance tables of one metric. Magnitude cells become the mean
    over every contributing record; the rate table becomes the mean of the
    per-instance rate sums, so its grid total stays at ``T / 2``.
    """
    if not heatmaps:
        raise ValueError("cannot average an empty list of heatmaps")
    metric = heatmaps[0].metric
    if any(h.metric is not metric for h in heatmaps):
        raise ValueError("heatmaps of different metrics cannot be averaged")

    counts = np.sum([h.counts for h in heatmaps], axis=0)
    if metric.is_rate:
        values = np.sum([h.values for h in heatmaps], axis=0) / len(heatmaps)
    else:
        weighted = np.sum(
            [np.where(h.counts > 0, h.values * h.counts, 0.0) for h in heatmaps], axis=0
        )
        with np.errstate(invalid="ignore", divide="ignore"):
            values = np.where(counts > 0, weighted / np.maximum(counts, 1), np.nan)
    return Heatmap(metric, values, counts)


def pooled_error_ratio(over: float, total: float) -> float | None:
    if total <= 0.0:
        return None
    return over / total


@dataclass(frozen=True)
class PolicyOutcome:
    """What one instance contributes to its setting's summary for one policy."""

    instance_id: int
    j_star: float
    j_pi: float
    gap: float
    regret_over: float
    regret_total: float
    heatmaps: Mapping[HeatmapMetric, Heatmap] = field(repr=False, compare=False)

    @property
    def error_ratio(self) -> float | None:
        return pooled_error_ratio(self.regret_over, self.regret_total)


@dataclass(frozen=True)
class SettingSummary:
    setting: Setting
    policy: PolicyName
    n_instances: int
    mean_objective: float
    mean_optimal: float
    mean_gap: float
    error_ratio: float | None
    # sum of over-regret divided by sum of total regret across instances
    pooled_ratio: float | None = None
    heatmaps: Mapping[HeatmapMetric, Heatmap] = field(repr=False, compare=False, default_factory=dict)

    @property
    def dominant(self) -> bool:
        """Underestimation dominates when it causes most of the weighted regret."""
        return self.error_ratio is not None and self.error_ratio < DOMINANCE_THRESHOLD

    def serialize(self) -> dict:
        return {
            "setting": self.setting.ordinal,
            "label": self.setting.label,
            "policy": self.policy.value,
            "n_instances": self.n_instances,
            "J_star": self.mean_optimal,
            "J_pi": self.mean_objective,
            "gap": self.mean_gap,
            "E": self.error_ratio,
            "E_pooled": self.pooled_ratio,
            "dominant": self.dominant,
        }


def _mean_defined(values: Sequence[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def summarize_setting(
    setting: Setting, policy: PolicyName, outcomes: Sequence[PolicyOutcome]
) -> SettingSummary:
    """
    Average objective values, gaps and error ratios over instances.

    E is the mean of the per-instance ratios, skipping instances without
    regret; it is None when no instance has any. The pooled ratio sums
    numerators and denominators first and is reported next to it.
    """
    if not outcomes:
        raise ValueError(f"setting {setting.ordinal:02d} has no outcomes for {policy.value}")

    outcomes = sorted(outcomes, key=lambda o: o.instance_id)
    over = float(sum(o.regret_over for o in outcomes))
    total = float(sum(o.regret_total for o in outcomes))

    heatmaps = {
        metric: average_heatmaps([o.heatmaps[metric] for o in outcomes])
        for metric in HeatmapMetric
    }
    return SettingSummary(
        setting=setting,
        policy=policy,
        n_instances=len(outcomes),
        mean_objective=float(np.mean([o.j_pi for o in outcomes])),
        mean_optimal=float(np.mean([o.j_star for o in outcomes])),
        mean_gap=float(np.mean([o.gap for o in outcomes])),
        error_ratio=_mean_defined([o.error_ratio for o in outcomes]),
        pooled_ratio=pooled_error_ratio(over, total),
        heatmaps=heatmaps,
    )


def dominance_fraction(summaries: Sequence[SettingSummary]) -> float | None:
    """Share of settings in which underestimation dominates."""
    if not summaries:
        return None
    return sum(s.dominant for s in summaries) / len(summaries)
