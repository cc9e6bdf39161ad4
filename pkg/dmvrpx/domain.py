"""
Core domain types: the 66-setting catalogue, customer streams, order sets
and per-epoch value tables.

Customer ``c`` arrives (with probability one half) only at decision epoch
``c``, so a customer's index doubles as its arrival epoch. Order sets are
bitmasks with customer ``c`` on bit ``c - 1``; at epoch ``t`` the subsets of
``{1..t}`` are exactly the integers below ``2**t``.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from dmvrpx.errors import ContractViolation, InvalidSettingError


HORIZON = 10
ARRIVAL_PROBABILITY = 0.5
LOW_REVENUE = 15.0
HIGH_REVENUE = 25.0
HIGH_REVENUE_SHARE = 0.3
SEGMENT = (-25.0, 25.0)
DEPOT = 0.0

# comparison tolerance for decisions, feasibility and invariant checks
TOLERANCE = 1e-9

# instance files carry every real with 17 significant digits
REAL_FORMAT = ".17g"
_TAGGED_REAL = re.compile(r'"@real:([^"]+)"')


class LocationDist(Enum):
    UNIF = "unif"
    CLUST = "clust"
    CLUST_SORT = "clust_sort"


class RevenueDist(Enum):
    HOMOG = "homog"
    RAND = "rand"
    LBH = "l-b-h"
    HBL = "h-b-l"


class Profitability(Enum):
    HIGH = "high"
    MED = "med"
    LOW = "low"

    @property
    def cost_factor(self) -> float:
        return _COST_FACTORS[self]


_COST_FACTORS = {
    Profitability.HIGH: 0.2,
    Profitability.MED: 0.6,
    Profitability.LOW: 1.0,
}


class Constraint(Enum):
    LOAD = "load"
    DIST = "dist"

    @property
    def limit(self) -> float:
        """Vehicle capacity in orders (load) or maximum tour length (dist)."""
        return 3.0 if self is Constraint.LOAD else 50.0


class PolicyName(str, Enum):
    OPTIMAL = "optimal"
    DPC = "dpc"
    MCTS = "mcts"
    MYOPIC = "myopic"


def _position(member: Enum) -> int:
    return list(type(member)).index(member)


@dataclass(frozen=True)
class Setting:
    location_dist: LocationDist
    revenue_dist: RevenueDist
    profitability: Profitability
    constraint: Constraint
    horizon: int = HORIZON

    def __post_init__(self):
        if (
            self.location_dist is LocationDist.CLUST_SORT
            and self.revenue_dist is RevenueDist.HOMOG
        ):
            raise InvalidSettingError(
                "clust_sort requires heterogeneous revenues; "
                "(clust_sort, homog) is not a valid setting"
            )
        if self.horizon < 1:
            raise InvalidSettingError(f"horizon must be positive, got {self.horizon}")

    @property
    def cost_factor(self) -> float:
        return self.profitability.cost_factor

    @property
    def customer_setting(self) -> tuple[LocationDist, RevenueDist]:
        return (self.location_dist, self.revenue_dist)

    @property
    def sort_key(self) -> tuple[int, int, int, int]:
        return (
            _position(self.location_dist),
            _position(self.revenue_dist),
            _position(self.profitability),
            _position(self.constraint),
        )

    @property
    def ordinal(self) -> int:
        """Position in the canonical catalogue (horizon is not part of it)."""
        return _ordinals()[self.sort_key]

    @property
    def label(self) -> str:
        """Caption label in ``prof | cons | loc | rev`` order."""
        return " | ".join(
            (
                self.profitability.value,
                self.constraint.value,
                self.location_dist.value,
                self.revenue_dist.value,
            )
        )

    def serialize(self) -> dict:
        return {
            "loc": self.location_dist.value,
            "rev": self.revenue_dist.value,
            "prof": self.profitability.value,
            "cons": self.constraint.value,
        }

    @classmethod
    def deserialize(cls, data: dict, horizon: int = HORIZON) -> "Setting":
        return cls(
            location_dist=LocationDist(data["loc"]),
            revenue_dist=RevenueDist(data["rev"]),
            profitability=Profitability(data["prof"]),
            constraint=Constraint(data["cons"]),
            horizon=horizon,
        )


@lru_cache(maxsize=1)
def _catalogue() -> tuple[Setting, ...]:
    settings = []
    for loc, rev, prof, cons in itertools.product(
        LocationDist, RevenueDist, Profitability, Constraint
    ):
        if loc is LocationDist.CLUST_SORT and rev is RevenueDist.HOMOG:
            continue
        settings.append(Setting(loc, rev, prof, cons))
    return tuple(settings)


def enumerate_settings() -> list[Setting]:
    """
    All 66 valid settings, ordered lexicographically by
    (location_dist, revenue_dist, profitability, constraint) in enum
    declaration order.
    """
    return list(_catalogue())


def setting_by_ordinal(ordinal: int) -> Setting:
    catalogue = _catalogue()
    if not 0 <= ordinal < len(catalogue):
        raise InvalidSettingError(
            f"setting ordinal must be in 0..{len(catalogue) - 1}, got {ordinal}"
        )
    return catalogue[ordinal]


@lru_cache(maxsize=1)
def _ordinals() -> dict[tuple[int, int, int, int], int]:
    return {s.sort_key: i for i, s in enumerate(_catalogue())}


@dataclass(frozen=True)
class Customer:
    index: int
    location: float
    revenue: float

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"customer index must be >= 1, got {self.index}")
        lo, hi = SEGMENT
        if not lo <= self.location <= hi:
            raise ValueError(
                f"customer {self.index} location {self.location!r} outside [{lo}, {hi}]"
            )

    def serialize(self) -> dict:
        return {
            "index": self.index,
            "location": float(self.location),
            "revenue": float(self.revenue),
        }

    @classmethod
    def deserialize(cls, data: dict) -> "Customer":
        return cls(
            index=int(data["index"]),
            location=float(data["location"]),
            revenue=float(data["revenue"]),
        )


@dataclass(frozen=True)
class Instance:
    setting: Setting
    customers: tuple[Customer, ...]
    instance_id: int = 0
    seed: int = 0
    # overrides the setting's routing cost factor (e.g. zero-cost checks)
    routing_cost: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "customers", tuple(self.customers))
        if len(self.customers) != self.setting.horizon:
            raise ValueError(
                f"instance has {len(self.customers)} customers, "
                f"setting horizon is {self.setting.horizon}"
            )
        for position, customer in enumerate(self.customers, start=1):
            if customer.index != position:
                raise ValueError(
                    f"customer at position {position} has index {customer.index}"
                )
        if self.routing_cost is not None and self.routing_cost < 0:
            raise ValueError(f"routing cost must be non-negative, got {self.routing_cost}")

    @classmethod
    def from_stream(
        cls,
        setting: Setting,
        stream: Sequence[tuple[float, float]],
        **kwargs,
    ) -> "Instance":
        """Build an instance from ``(location, revenue)`` pairs in arrival order."""
        customers = tuple(
            Customer(index=i, location=loc, revenue=rev)
            for i, (loc, rev) in enumerate(stream, start=1)
        )
        return cls(setting=replace(setting, horizon=len(customers)), customers=customers, **kwargs)

    @property
    def horizon(self) -> int:
        return self.setting.horizon

    @property
    def cost_factor(self) -> float:
        if self.routing_cost is not None:
            return self.routing_cost
        return self.setting.cost_factor

    @property
    def locations(self) -> np.ndarray:
        return np.array([c.location for c in self.customers], dtype=float)

    @property
    def revenues(self) -> np.ndarray:
        return np.array([c.revenue for c in self.customers], dtype=float)

    def customer(self, index: int) -> Customer:
        return self.customers[index - 1]

    def serialize(self) -> dict:
        data = {
            "setting": self.setting.serialize(),
            "seed": int(self.seed),
            "instance_id": int(self.instance_id),
            "customers": [c.serialize() for c in self.customers],
        }
        if self.routing_cost is not None:
            data["routing_cost"] = float(self.routing_cost)
        return data

    @classmethod
    def deserialize(cls, data: dict) -> "Instance":
        customers = tuple(Customer.deserialize(c) for c in data["customers"])
        routing_cost = data.get("routing_cost")
        return cls(
            setting=Setting.deserialize(data["setting"], horizon=len(customers)),
            customers=customers,
            instance_id=int(data["instance_id"]),
            seed=int(data["seed"]),
            routing_cost=None if routing_cost is None else float(routing_cost),
        )

    def to_json(self) -> str:
        text = json.dumps(_tag_reals(self.serialize()), indent=2, allow_nan=False)
        return _TAGGED_REAL.sub(r"\1", text) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        return cls.deserialize(json.loads(text))


def _tag_reals(data):
    if isinstance(data, float):
        return f"@real:{data:{REAL_FORMAT}}"
    if isinstance(data, dict):
        return {k: _tag_reals(v) for k, v in data.items()}
    if isinstance(data, list):
        return [_tag_reals(v) for v in data]
    return data


@dataclass(frozen=True, order=True)
class OrderSet:
    """Post-decision state: the customers accepted so far."""

    mask: int = 0

    def __post_init__(self):
        if self.mask < 0:
            raise ValueError(f"order set mask must be non-negative, got {self.mask}")

    @classmethod
    def empty(cls) -> "OrderSet":
        return cls(0)

    @classmethod
    def of(cls, *customers: int) -> "OrderSet":
        mask = 0
        for c in customers:
            mask |= 1 << (c - 1)
        return cls(mask)

    def add(self, customer: int) -> "OrderSet":
        return OrderSet(self.mask | (1 << (customer - 1)))

    def __contains__(self, customer: int) -> bool:
        return bool(self.mask >> (customer - 1) & 1)

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def __iter__(self) -> Iterator[int]:
        return iter(self.customers())

    def customers(self) -> tuple[int, ...]:
        return tuple(i + 1 for i in range(self.mask.bit_length()) if self.mask >> i & 1)

    def issubset(self, other: "OrderSet") -> bool:
        return self.mask & ~other.mask == 0

    def bitstring(self, horizon: int = HORIZON) -> str:
        """Customer 1 is the leftmost character."""
        return "".join("1" if c in self else "0" for c in range(1, horizon + 1))


class ValueKind(Enum):
    OPTIMAL = "optimal"
    DPC = "dpc"
    MCTS = "mcts"
    REVENUE_SHARE = "revenue_share"
    COST_SHARE = "cost_share"
    POLICY_VALUE = "policy_value"


@dataclass(frozen=True, eq=False)
class ValueTable:
    """
    Values per epoch ``t`` in ``0..T`` over order sets ``A`` within
    ``{1..t}``, stored as a ``(T + 1, 2**T)`` array; row ``t`` is only
    defined on its first ``2**t`` columns.

    When ``feasible`` is given (one flag per mask), only routing-feasible
    order sets are part of the table: lookups of other sets fail and
    ``items`` skips them.
    """

    kind: ValueKind
    values: np.ndarray = field(repr=False)
    feasible: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != 1 << (values.shape[0] - 1):
            raise ValueError(
                f"value table must have shape (T + 1, 2**T), got {values.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

        if self.feasible is not None:
            feasible = np.array(self.feasible, dtype=bool)
            if feasible.shape != (values.shape[1],):
                raise ValueError(
                    f"feasibility flags must cover {values.shape[1]} masks, got {feasible.shape}"
                )
            feasible.setflags(write=False)
            object.__setattr__(self, "feasible", feasible)

    def is_feasible(self, mask: int) -> bool:
        return self.feasible is None or bool(self.feasible[mask])

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1

    def epoch(self, t: int) -> np.ndarray:
        return self.values[t, : 1 << t]

    def __getitem__(self, key: tuple[int, OrderSet | int]) -> float:
        t, state = key
        mask = state.mask if isinstance(state, OrderSet) else int(state)
        if not 0 <= t <= self.horizon or mask >= 1 << t:
            raise ContractViolation(
                f"{self.kind.value} table has no entry for epoch {t}, mask {mask}"
            )
        if not self.is_feasible(mask):
            raise ContractViolation(
                f"{self.kind.value} table has no entry for infeasible order set {mask} at epoch {t}"
            )
        return float(self.values[t, mask])

    def items(self) -> Iterator[tuple[int, OrderSet, float]]:
        for t in range(self.horizon + 1):
            for mask, value in enumerate(self.epoch(t)):
                if self.is_feasible(mask):
                    yield t, OrderSet(mask), float(value)
