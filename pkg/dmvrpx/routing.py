"""
Exact single-vehicle tour costs on the line.

The depot sits at the origin and every tour is closed. On a line the
shortest closed tour through a set of points runs out to the rightmost
point and back to the leftmost one, so its length is
``2 * (max(0, max l) - min(0, min l))``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from dmvrpx.domain import DEPOT, TOLERANCE, Constraint, Instance, OrderSet


LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class TourResult:
    length: float
    feasible: bool


def optimal_tour_length(locations: Iterable[float]) -> float:
    points = list(locations)
    if not points:
        return 0.0
    return 2.0 * (max(DEPOT, max(points)) - min(DEPOT, min(points)))


@dataclass(frozen=True, eq=False)
class RouteTable:
    """
    Tour length and feasibility of every order set of one instance,
    indexed by mask.
    """

    lengths: np.ndarray
    sizes: np.ndarray
    feasible: np.ndarray

    def tour(self, order_set: OrderSet) -> TourResult:
        return TourResult(
            length=float(self.lengths[order_set.mask]),
            feasible=bool(self.feasible[order_set.mask]),
        )


def _build_route_table(instance: Instance) -> RouteTable:
    n = 1 << instance.horizon
    locations = [c.location for c in instance.customers]

    rightmost = [DEPOT] * n
    leftmost = [DEPOT] * n
    sizes = [0] * n
    for mask in range(1, n):
        rest = mask & (mask - 1)
        loc = locations[(mask & -mask).bit_length() - 1]
        rightmost[mask] = max(rightmost[rest], loc)
        leftmost[mask] = min(leftmost[rest], loc)
        sizes[mask] = sizes[rest] + 1

    lengths = 2.0 * (np.array(rightmost) - np.array(leftmost))
    sizes_arr = np.array(sizes, dtype=np.int64)

    limit = instance.setting.constraint.limit
    if instance.setting.constraint is Constraint.LOAD:
        # unit demand per customer
        feasible = sizes_arr <= limit
    else:
        feasible = lengths <= limit + TOLERANCE

    for arr in (lengths, sizes_arr, feasible):
        arr.setflags(write=False)
    return RouteTable(lengths=lengths, sizes=sizes_arr, feasible=feasible)


@lru_cache(maxsize=64)
def route_table(instance: Instance) -> RouteTable:
    """Memoized per instance; identical to a fresh build."""
    LOG.debug("building route table for instance %d (T=%d)", instance.instance_id, instance.horizon)
    return _build_route_table(instance)


def tour(order_set: OrderSet, instance: Instance) -> TourResult:
    return route_table(instance).tour(order_set)


def is_feasible(order_set: OrderSet, instance: Instance) -> bool:
    return tour(order_set, instance).feasible
