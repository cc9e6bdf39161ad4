"""
Seeded generation of customer streams.

Each instance draws from its own Philox generator, seeded by a 64-bit value
derived from ``(root_seed, setting ordinal, instance_id)`` through numpy's
``SeedSequence``. An instance therefore regenerates on its own, in any order
and in any worker.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np

from dmvrpx.domain import (
    HIGH_REVENUE,
    HIGH_REVENUE_SHARE,
    LOW_REVENUE,
    SEGMENT,
    Customer,
    Instance,
    LocationDist,
    RevenueDist,
    Setting,
    enumerate_settings,
)


LOG = logging.getLogger(__name__)

NEAR_CLUSTER = (-10.0, 2.5)
DISTANT_CLUSTER = (20.0, 2.5)

# cluster labels returned alongside clustered locations
UNCLUSTERED, NEAR, DISTANT = -1, 0, 1


def derive_seed(*entropy: int) -> int:
    """One 64-bit seed from a tuple of non-negative integers."""
    sequence = np.random.SeedSequence(list(entropy))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class StreamRng:
    root_seed: int

    def __post_init__(self):
        if not 0 <= self.root_seed < 2**64:
            raise ValueError(f"root seed must fit in 64 unsigned bits, got {self.root_seed}")

    def instance_seed(self, setting: Setting, instance_id: int) -> int:
        return derive_seed(self.root_seed, setting.ordinal, instance_id)

    @staticmethod
    def generator(seed: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(seed))


def _truncated_normal(
    rng: np.random.Generator, mean: float, sd: float, size: int
) -> list[float]:
    lo, hi = SEGMENT
    draws: list[float] = []
    while len(draws) < size:
        x = float(rng.normal(mean, sd))
        if lo <= x <= hi:
            draws.append(x)
    return draws


def sample_locations_with_clusters(
    setting: Setting, rng: np.random.Generator
) -> tuple[list[float], list[int]]:
    """Locations in arrival order plus the cluster each one was drawn from."""
    n = setting.horizon

    if setting.location_dist is LocationDist.UNIF:
        lo, hi = SEGMENT
        return [float(x) for x in rng.uniform(lo, hi, size=n)], [UNCLUSTERED] * n

    n_near = n // 2
    n_distant = n - n_near
    locations = _truncated_normal(rng, *NEAR_CLUSTER, n_near) + _truncated_normal(
        rng, *DISTANT_CLUSTER, n_distant
    )
    clusters = [NEAR] * n_near + [DISTANT] * n_distant

    order = rng.permutation(n)
    return [locations[i] for i in order], [clusters[i] for i in order]


def sample_locations(setting: Setting, rng: np.random.Generator) -> list[float]:
    return sample_locations_with_clusters(setting, rng)[0]


def assign_revenues(
    setting: Setting,
    locations: Sequence[float],
    rng: np.random.Generator,
    clusters: Sequence[int] | None = None,
) -> list[float]:
    n = len(locations)

    if setting.revenue_dist is RevenueDist.HOMOG:
        return [LOW_REVENUE] * n

    n_high = int(round(HIGH_REVENUE_SHARE * n))

    if setting.location_dist is LocationDist.CLUST_SORT:
        if clusters is None:
            # midpoint between the two cluster means
            boundary = (NEAR_CLUSTER[0] + DISTANT_CLUSTER[0]) / 2
            clusters = [DISTANT if x > boundary else NEAR for x in locations]
        candidates = [i for i, k in enumerate(clusters) if k == DISTANT]
        if len(candidates) < n_high:
            raise ValueError(
                f"distant cluster holds {len(candidates)} customers, "
                f"{n_high} high-revenue customers required"
            )
    else:
        candidates = list(range(n))

    chosen = {int(i) for i in rng.choice(candidates, size=n_high, replace=False)}
    return [HIGH_REVENUE if i in chosen else LOW_REVENUE for i in range(n)]


def order_stream(
    setting: Setting,
    customers: Sequence[Customer],
    *,
    instance_id: int = 0,
    seed: int = 0,
) -> Instance:
    """
    Apply the arrival ordering of the revenue distribution and renumber.

    h-b-l puts every high-revenue customer first, l-b-h puts them last; the
    sort is stable so sampled order survives within a revenue class.
    """
    ordered = list(customers)
    if setting.revenue_dist is RevenueDist.HBL:
        ordered.sort(key=lambda c: 0 if c.revenue >= HIGH_REVENUE else 1)
    elif setting.revenue_dist is RevenueDist.LBH:
        ordered.sort(key=lambda c: 1 if c.revenue >= HIGH_REVENUE else 0)

    return Instance(
        setting=setting,
        customers=tuple(replace(c, index=i) for i, c in enumerate(ordered, start=1)),
        instance_id=instance_id,
        seed=seed,
    )


def generate_instance(setting: Setting, instance_id: int, root_seed: int) -> Instance:
    seed = StreamRng(root_seed).instance_seed(setting, instance_id)
    return generate_from_seed(setting, instance_id, seed)


def generate_from_seed(setting: Setting, instance_id: int, seed: int) -> Instance:
    rng = StreamRng.generator(seed)
    locations, clusters = sample_locations_with_clusters(setting, rng)
    revenues = assign_revenues(setting, locations, rng, clusters)
    sampled = [
        Customer(index=i, location=loc, revenue=rev)
        for i, (loc, rev) in enumerate(zip(locations, revenues), start=1)
    ]
    return order_stream(setting, sampled, instance_id=instance_id, seed=seed)


def generate_study_instances(
    root_seed: int,
    instances_per_setting: int,
    settings: Sequence[Setting] | None = None,
) -> Iterator[Instance]:
    """Instances in canonical (setting ordinal, instance_id) order."""
    settings = sorted(settings or enumerate_settings(), key=lambda s: s.ordinal)
    for setting in settings:
        LOG.debug("generating %d instances for setting %02d", instances_per_setting, setting.ordinal)
        for instance_id in range(instances_per_setting):
            yield generate_instance(setting, instance_id, root_seed)
