from pathlib import Path

from dmvrpx.domain import (
    Constraint,
    Instance,
    LocationDist,
    Profitability,
    RevenueDist,
    Setting,
)


FIXTURESPATH = Path(__file__).parent


def make_setting(
    prof: Profitability = Profitability.MED,
    cons: Constraint = Constraint.LOAD,
    loc: LocationDist = LocationDist.UNIF,
    rev: RevenueDist = RevenueDist.HOMOG,
) -> Setting:
    return Setting(location_dist=loc, revenue_dist=rev, profitability=prof, constraint=cons)


def toy_instance(location: float = -10.0, cons: Constraint = Constraint.LOAD) -> Instance:
    """
    One customer at distance 10 paying 15 under medium profitability:
    accepting costs 0.6 * 20 = 12 in routing, so the optimal value is
    0.5 * (15 - 12) = 1.5. Neither limit binds for a single order.
    """
    return Instance.from_stream(make_setting(cons=cons), [(location, 15.0)])


# the one-customer example under each vehicle limit
TOY_VARIANTS = [(-10.0, Constraint.LOAD), (10.0, Constraint.DIST)]


def line_instance(setting: Setting, stream: list[tuple[float, float]], **kwargs) -> Instance:
    return Instance.from_stream(setting, stream, **kwargs)
