"""Shared fixtures: small worlds and robot profiles used across suites."""

import pytest

from fleetops.grid import Grid
from fleetops.robots import RobotProfile
from fleetops.world import World, WorldObject


def make_profile(
    name="Rover1",
    kind="wheeled",
    max_speed=1,
    battery_capacity=100,
    battery_pct=100.0,
    capabilities=("wheeled", "camera"),
    traversable=("flat", "door"),
):
    return RobotProfile(
        name=name,
        kind=kind,
        height_m=0.3,
        width_m=0.4,
        max_speed=max_speed,
        battery_capacity=battery_capacity,
        battery_pct=battery_pct,
        capabilities=frozenset(capabilities),
        traversable=frozenset(traversable),
    )


def make_world(map_text, robots=(), objects=(), seed=0):
    """robots: iterable of (profile, (x, y)); objects: WorldObject kwargs."""
    world = World(Grid.from_text(map_text), seed)
    for kwargs in objects:
        world.add_object(WorldObject(**kwargs))
    for profile, (x, y) in robots:
        world.add_robot(profile, x, y)
    return world


OPEN_5X5 = "\n".join(["....."] * 5)


@pytest.fixture
def open_world():
    return make_world(OPEN_5X5, robots=[(make_profile(), (0, 0))])
