"""
Per-decision explainability metrics of an approximate policy against the
optimal one: signed opportunity-cost error, single-decision regret split by
error sign, decision rates, the weighted error ratio and the optimality gap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
import pandas as pd

from dmvrpx.aggregate import capacity_pct_vector, pooled_error_ratio
from dmvrpx.domain import ARRIVAL_PROBABILITY, Instance, OrderSet
from dmvrpx.dp import PolicySolution, check_decision_point
from dmvrpx.instgen import StreamRng
from dmvrpx.policies import DecisionRule, as_rule


LOG = logging.getLogger(__name__)

GAP_FLOOR = 1e-6

RECORD_COLUMNS = (
    "policy",
    "t",
    "mask",
    "capacity_pct",
    "signed_error",
    "e_over",
    "e_under",
    "regret",
    "regret_over",
    "regret_under",
    "P",
)


@dataclass(frozen=True)
class MetricRecord:
    epoch: int
    state: OrderSet
    capacity_pct: float
    signed_error: float
    e_over: float
    e_under: float
    regret: float
    regret_over: float
    regret_under: float
    decision_rate: float


_ARRAY_FIELDS = (
    "epoch",
    "mask",
    "capacity_pct",
    "signed_error",
    "e_over",
    "e_under",
    "regret",
    "regret_over",
    "regret_under",
    "decision_rate",
)


@dataclass(frozen=True, eq=False)
class MetricRecords:
    """Column store of MetricRecords for one policy on one instance."""

    policy: str
    horizon: int
    epoch: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    capacity_pct: np.ndarray = field(repr=False)
    signed_error: np.ndarray = field(repr=False)
    e_over: np.ndarray = field(repr=False)
    e_under: np.ndarray = field(repr=False)
    regret: np.ndarray = field(repr=False)
    regret_over: np.ndarray = field(repr=False)
    regret_under: np.ndarray = field(repr=False)
    decision_rate: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.epoch)

    def __iter__(self) -> Iterator[MetricRecord]:
        for i in range(len(self)):
            yield MetricRecord(
                epoch=int(self.epoch[i]),
                state=OrderSet(int(self.mask[i])),
                capacity_pct=float(self.capacity_pct[i]),
                signed_error=float(self.signed_error[i]),
                e_over=float(self.e_over[i]),
                e_under=float(self.e_under[i]),
                regret=float(self.regret[i]),
                regret_over=float(self.regret_over[i]),
                regret_under=float(self.regret_under[i]),
                decision_rate=float(self.decision_rate[i]),
            )

    @classmethod
    def from_records(
        cls, policy: str, horizon: int, records: Iterable[MetricRecord]
    ) -> "MetricRecords":
        records = list(records)
        columns = {
            name: np.array(
                [r.state.mask if name == "mask" else getattr(r, name) for r in records],
                dtype=np.int64 if name in ("epoch", "mask") else float,
            )
            for name in _ARRAY_FIELDS
        }
        return cls(policy=policy, horizon=horizon, **columns)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "policy": [self.policy] * len(self),
                "t": self.epoch,
                "mask": [OrderSet(int(m)).bitstring(self.horizon) for m in self.mask],
                "capacity_pct": self.capacity_pct,
                "signed_error": self.signed_error,
                "e_over": self.e_over,
                "e_under": self.e_under,
                "regret": self.regret,
                "regret_over": self.regret_over,
                "regret_under": self.regret_under,
                "P": self.decision_rate,
            },
            columns=list(RECORD_COLUMNS),
        )


@dataclass(frozen=True, eq=False)
class DecisionRates:
    """
    ``P(A, t)``: probability that a policy sits in state ``A`` when customer
    ``t`` requests. Shape ``(T + 1, 2**(T-1))`` like the decision tables.
    """

    values: np.ndarray = field(repr=False)

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1

    def vector(self, t: int) -> np.ndarray:
        return self.values[t, : 1 << (t - 1)]

    def rate(self, t: int, state: OrderSet) -> float:
        check_decision_point(self.horizon, t, state.mask)
        return float(self.values[t, state.mask])

    def __getitem__(self, key: tuple[int, OrderSet]) -> float:
        return self.rate(*key)

    def epoch_total(self, t: int) -> float:
        return float(self.vector(t).sum())

    def items(self) -> Iterator[tuple[tuple[int, OrderSet], float]]:
        """Decision points with positive rate."""
        for t in range(1, self.horizon + 1):
            vec = self.vector(t)
            for mask in np.flatnonzero(vec > 0):
                yield (t, OrderSet(int(mask))), float(vec[mask])


def decision_rates(rule: DecisionRule, instance: Instance) -> DecisionRates:
    """Exact forward propagation of state probabilities under ``rule``."""
    horizon = instance.horizon
    rates = np.zeros((horizon + 1, 1 << (horizon - 1)))
    mass = np.ones(1)

    for t in range(1, horizon + 1):
        half = 1 << (t - 1)
        arriving = ARRIVAL_PROBABILITY * mass
        rates[t, :half] = arriving

        g = np.asarray(rule.decision_vector(t), dtype=bool)
        successor = np.zeros(2 * half)
        successor[:half] = mass - np.where(g, arriving, 0.0)
        successor[half:] = np.where(g, arriving, 0.0)
        mass = successor

    rates.setflags(write=False)
    return DecisionRates(rates)


def sample_decision_rates(
    rule: DecisionRule, instance: Instance, n_paths: int, seed: int
) -> DecisionRates:
    """Monte-Carlo estimate of the decision rates from ``n_paths`` demand paths."""
    if n_paths < 1:
        raise ValueError(f"n_paths must be positive, got {n_paths}")

    horizon = instance.horizon
    rng = StreamRng.generator(seed)
    arrivals = rng.random((n_paths, horizon)) < ARRIVAL_PROBABILITY
    masks = np.zeros(n_paths, dtype=np.int64)
    rates = np.zeros((horizon + 1, 1 << (horizon - 1)))

    for t in range(1, horizon + 1):
        half = 1 << (t - 1)
        arrived = arrivals[:, t - 1]
        rates[t, :half] = np.bincount(masks[arrived], minlength=half) / n_paths

        g = np.asarray(rule.decision_vector(t), dtype=bool)
        masks = np.where(arrived & g[masks], masks + half, masks)

    rates.setflags(write=False)
    return DecisionRates(rates)


def binomial_outlier_share(
    exact: DecisionRates, sampled: DecisionRates, n_paths: int, sigmas: float = 3.0
) -> float:
    """Share of reachable decision points whose sampled rate leaves the binomial band."""
    p = exact.values
    reachable = p > 0
    band = sigmas * np.sqrt(p * (1.0 - p) / n_paths) + 1e-12
    outside = np.abs(sampled.values - p) > band
    if np.any(outside & ~reachable):
        return 1.0
    return float(np.count_nonzero(outside & reachable) / max(np.count_nonzero(reachable), 1))


def compute_errors(
    optimal: PolicySolution,
    approx: DecisionRule,
    instance: Instance,
    rates: DecisionRates | None = None,
) -> MetricRecords:
    """
    Metric records for every decision point visited by ``approx`` or by the
    optimal policy. Errors are measured where acceptance is feasible; when
    it is not, both policies must reject and the record carries no error.
    Regret uses the true opportunity cost for both decisions.
    """
    if rates is None:
        rates = decision_rates(approx, instance)
    optimal_rates = decision_rates(as_rule(optimal), instance)

    columns: dict[str, list[np.ndarray]] = {name: [] for name in _ARRAY_FIELDS}

    for t in range(1, instance.horizon + 1):
        half = 1 << (t - 1)
        p = rates.vector(t)
        masks = np.flatnonzero((p > 0) | (optimal_rates.vector(t) > 0))

        feasible = approx.feasible_vector(t)[masks]
        true_oc = optimal.oc_vector(t)[masks]
        estimate = approx.oc_vector(t)[masks]
        with np.errstate(invalid="ignore"):
            signed = np.where(feasible, estimate - true_oc, 0.0)

        margin = instance.customer(t).revenue - true_oc
        g_star = optimal.decision_vector(t)[masks].astype(float)
        g_tilde = np.asarray(approx.decision_vector(t), dtype=float)[masks]
        regret = np.maximum((g_star - g_tilde) * margin, 0.0)

        e_over = np.maximum(signed, 0.0)
        e_under = np.maximum(-signed, 0.0)

        columns["epoch"].append(np.full(len(masks), t, dtype=np.int64))
        columns["mask"].append(masks.astype(np.int64))
        columns["capacity_pct"].append(capacity_pct_vector(masks, instance))
        columns["signed_error"].append(signed)
        columns["e_over"].append(e_over)
        columns["e_under"].append(e_under)
        columns["regret"].append(regret)
        columns["regret_over"].append(np.where(e_over > 0, regret, 0.0))
        columns["regret_under"].append(np.where(e_under > 0, regret, 0.0))
        columns["decision_rate"].append(p[masks])

        LOG.debug("epoch %d: %d of %d states recorded", t, len(masks), half)

    return MetricRecords(
        policy=approx.name,
        horizon=instance.horizon,
        **{name: np.concatenate(parts) for name, parts in columns.items()},
    )


def error_ratio_terms(records: MetricRecords) -> tuple[float, float]:
    """Rate-weighted overestimation regret and total regret."""
    over = float(np.sum(records.regret_over * records.decision_rate))
    total = float(
        np.sum((records.regret_over + records.regret_under) * records.decision_rate)
    )
    return over, total


def weighted_error_ratio(records: MetricRecords | Iterable[MetricRecord]) -> float | None:
    """
    Share of rate-weighted regret caused by overestimation; ``None`` when
    the policy has no regret at all.
    """
    if not isinstance(records, MetricRecords):
        records = MetricRecords.from_records("", 0, records)
    return pooled_error_ratio(*error_ratio_terms(records))


def optimality_gap(j_star: float, j_pi: float) -> float:
    return (j_star - j_pi) / max(abs(j_star), GAP_FLOOR)
