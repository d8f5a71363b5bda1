"""Capability profiles, live robot state, and the uniform action interface.

Every robot in a fleet, simulated or otherwise, is driven through the
``Robot`` base class: movement planning, jump/climb primitives, grasping,
scanning, and status reporting. Hardware-specific adapters override the
effect hooks; the bundled simulation uses the default in-grid behavior.

Battery model: 1 energy unit per cell entered, 2 per jump or climb,
1 per grasp, 0 for scan and wait. Actions costing more than the remaining
energy are rejected up front and battery never increases during a session.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Optional

from . import grid as gridmod
from .errors import (
    BatteryInsufficient,
    InfeasibleAction,
    NoActiveTask,
    Unreachable,
)
from .grid import TerrainCell
from .tasks import Region, region_contains

if TYPE_CHECKING:  # pragma: no cover
    from .world import World

ROBOT_KINDS = ("wheeled", "legged", "aerial", "arm")

# Open vocabulary; unknown tags are preserved, never rejected.
KNOWN_CAPABILITIES = frozenset(
    {
        "wheeled",
        "legged",
        "aerial",
        "arm",
        "climb_stairs",
        "jump",
        "rough_terrain",
        "open_door",
        "grasp",
        "camera",
    }
)

LOW_BATTERY_PCT = 10.0

MOVE_COST = 1
CLIMB_COST = 2
JUMP_COST = 2
GRASP_COST = 1


def can_perform(profile: "RobotProfile", requirement: Iterable[str]) -> bool:
    """True iff every required capability tag is in the profile."""
    return frozenset(requirement) <= profile.capabilities


@dataclass(frozen=True)
class RobotProfile:
    name: str
    kind: str
    height_m: float
    width_m: float
    max_speed: int  # cells per tick
    battery_capacity: int  # energy units
    battery_pct: float = 100.0  # initial charge
    capabilities: frozenset[str] = frozenset()
    traversable: frozenset[str] = frozenset({"flat", "door"})

    def __post_init__(self) -> None:
        object.__setattr__(self, "capabilities", frozenset(self.capabilities))
        object.__setattr__(self, "traversable", frozenset(self.traversable))
        problems = []
        if self.kind not in ROBOT_KINDS:
            problems.append(f"unknown robot kind {self.kind!r}")
        if self.max_speed < 1:
            problems.append("max_speed must be >= 1")
        if self.height_m <= 0 or self.width_m <= 0:
            problems.append("dimensions must be positive")
        if self.battery_capacity <= 0:
            problems.append("battery_capacity must be positive")
        if not 0 <= self.battery_pct <= 100:
            problems.append("battery_pct must be within [0, 100]")
        if problems:
            raise ValueError(f"robot {self.name!r}: " + "; ".join(problems))

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "height_m": self.height_m,
            "width_m": self.width_m,
            "max_speed": self.max_speed,
            "battery_capacity": self.battery_capacity,
            "battery_pct": self.battery_pct,
            "capabilities": sorted(self.capabilities),
            "traversable": sorted(self.traversable),
        }

    @staticmethod
    def from_json(data: dict) -> "RobotProfile":
        return RobotProfile(
            name=data["name"],
            kind=data["kind"],
            height_m=data["height_m"],
            width_m=data["width_m"],
            max_speed=data["max_speed"],
            battery_capacity=data["battery_capacity"],
            battery_pct=data.get("battery_pct", 100.0),
            capabilities=frozenset(data.get("capabilities", ())),
            traversable=frozenset(data.get("traversable", ("flat", "door"))),
        )


def passable(profile: RobotProfile, cell: TerrainCell) -> bool:
    """Terrain rule: doors block everyone when closed; obstacles block all
    ground robots but not aerial ones; everything else goes by the
    profile's traversable set."""
    if cell.kind == "door":
        return cell.open
    if cell.kind == "obstacle":
        return profile.kind == "aerial"
    if profile.kind == "aerial":
        return True
    return cell.kind in profile.traversable


@dataclass(frozen=True)
class RobotStatus:
    x: int
    y: int
    elevation_level: int = 0
    battery_pct: float = 100.0
    current_task: Optional[str] = None
    progress: float = 0.0
    fault: Optional[str] = None  # None == healthy

    @property
    def position(self) -> tuple[int, int]:
        return (self.x, self.y)

    def to_json(self) -> dict:
        return {
            "x": self.x,
            "y": self.y,
            "elevation_level": self.elevation_level,
            "battery_pct": round(self.battery_pct, 6),
            "current_task": self.current_task,
            "progress": round(self.progress, 6),
            "fault": self.fault,
        }

    @staticmethod
    def from_json(data: dict) -> "RobotStatus":
        return RobotStatus(
            x=data["x"],
            y=data["y"],
            elevation_level=data.get("elevation_level", 0),
            battery_pct=data.get("battery_pct", 100.0),
            current_task=data.get("current_task"),
            progress=data.get("progress", 0.0),
            fault=data.get("fault"),
        )


@dataclass(frozen=True)
class ActionCommand:
    """One high-level command: move_to | jump_upward | climb_up |
    climb_down | grasp | scan | wait.

    Grasping a door-kind object with the open_door capability opens the
    door instead of picking it up.
    """

    op: str
    target: Optional[tuple[int, int]] = None
    object_id: Optional[str] = None
    region: Optional[Region] = None

    @staticmethod
    def move_to(x: int, y: int) -> "ActionCommand":
        return ActionCommand("move_to", target=(x, y))

    @staticmethod
    def jump_upward() -> "ActionCommand":
        return ActionCommand("jump_upward")

    @staticmethod
    def climb_up() -> "ActionCommand":
        return ActionCommand("climb_up")

    @staticmethod
    def climb_down() -> "ActionCommand":
        return ActionCommand("climb_down")

    @staticmethod
    def grasp(object_id: str) -> "ActionCommand":
        return ActionCommand("grasp", object_id=object_id)

    @staticmethod
    def scan(region: Region) -> "ActionCommand":
        return ActionCommand("scan", region=region)

    @staticmethod
    def wait() -> "ActionCommand":
        return ActionCommand("wait")

    def to_json(self) -> dict:
        return {
            "op": self.op,
            "target": list(self.target) if self.target else None,
            "object_id": self.object_id,
            "region": list(self.region) if self.region else None,
        }

    @staticmethod
    def from_json(data: dict) -> "ActionCommand":
        return ActionCommand(
            op=data["op"],
            target=tuple(data["target"]) if data.get("target") else None,
            object_id=data.get("object_id"),
            region=tuple(data["region"]) if data.get("region") else None,
        )


@dataclass
class PathPlan:
    """Per-tick movement bursts for one move_to command."""

    bursts: list[list[tuple[int, int]]]
    cost: int  # energy units (1 per cell entered)

    @property
    def ticks(self) -> int:
        return len(self.bursts)


class Robot:
    """Uniform command interface over one robot's live state.

    The simulation tick loop is the single owner of this state; everyone
    else reads immutable ``RobotStatus`` snapshots via ``get_status``.
    """

    def __init__(self, profile: RobotProfile, x: int, y: int):
        self.profile = profile
        self.x = x
        self.y = y
        self.elevation_level = 0
        self.energy = profile.battery_pct / 100.0 * profile.battery_capacity
        self.current_task: Optional[str] = None
        self.progress = 0.0
        self.fault: Optional[str] = None
        self.carrying: Optional[str] = None
        self.plan: Optional[PathPlan] = None
        self.low_battery_warned = False

    # -- snapshots ---------------------------------------------------

    @property
    def name(self) -> str:
        return self.profile.name

    @property
    def position(self) -> tuple[int, int]:
        return (self.x, self.y)

    @property
    def battery_pct(self) -> float:
        return 100.0 * self.energy / self.profile.battery_capacity

    @property
    def busy(self) -> bool:
        return self.plan is not None and self.plan.bursts != []

    def get_status(self) -> RobotStatus:
        return RobotStatus(
            x=self.x,
            y=self.y,
            elevation_level=self.elevation_level,
            battery_pct=self.battery_pct,
            current_task=self.current_task,
            progress=self.progress if self.current_task else 0.0,
            fault=self.fault,
        )

    def get_task_progress(self) -> tuple[str, float]:
        if not self.current_task:
            raise NoActiveTask(f"{self.name} has no active task")
        return self.current_task, self.progress

    # -- energy ------------------------------------------------------

    def _require_energy(self, cost: float, what: str) -> None:
        if cost > self.energy:
            raise BatteryInsufficient(
                f"{self.name}: {what} needs {cost:g} units, {self.energy:g} left"
            )

    def drain(self, cost: float) -> None:
        self.energy = max(0.0, self.energy - cost)

    # -- actions -----------------------------------------------------

    def plan_move(self, target: tuple[int, int], world: "World") -> PathPlan:
        """Shortest 4-connected path over this robot's traversable terrain,
        chunked into per-tick bursts of at most max_speed cells.

        Raises Unreachable when no path exists and BatteryInsufficient when
        the 1-unit-per-cell cost exceeds remaining energy.
        """
        if not world.grid.in_bounds(*target):
            raise Unreachable(f"{self.name}: target {target} out of bounds")
        path = gridmod.shortest_path(
            world.grid,
            self.position,
            {target},
            lambda cell: passable(self.profile, cell),
        )
        if path is None:
            raise Unreachable(f"{self.name}: no traversable path to {target}")
        cost = len(path) * MOVE_COST
        self._require_energy(cost, f"move to {target}")
        speed = self.profile.max_speed
        bursts = [path[i : i + speed] for i in range(0, len(path), speed)]
        return PathPlan(bursts=bursts, cost=cost)

    def jump_upward(self, world: "World") -> None:
        if "jump" not in self.profile.capabilities:
            raise InfeasibleAction(f"{self.name} cannot jump (capability missing)")
        target_level = self.elevation_level + 1
        beside_table = any(
            world.grid.at(nx, ny).kind == "table"
            and world.grid.at(nx, ny).level == target_level
            for nx, ny in world.grid.neighbors4(self.x, self.y)
        )
        if not beside_table:
            raise InfeasibleAction(
                f"{self.name}: no adjacent table surface at level {target_level}"
            )
        self._require_energy(JUMP_COST, "jump")
        self.drain(JUMP_COST)
        self.elevation_level = target_level

    def climb_up(self, world: "World") -> None:
        self._climb(world, +1)

    def climb_down(self, world: "World") -> None:
        if self.elevation_level <= 0:
            raise InfeasibleAction(f"{self.name}: already at ground level")
        self._climb(world, -1)

    def _climb(self, world: "World", delta: int) -> None:
        if "climb_stairs" not in self.profile.capabilities:
            raise InfeasibleAction(f"{self.name} cannot climb stairs")
        if world.grid.at(self.x, self.y).kind != "stairs":
            raise InfeasibleAction(f"{self.name}: not standing on stairs")
        self._require_energy(CLIMB_COST, "climb")
        self.drain(CLIMB_COST)
        self.elevation_level += delta

    def enter(self, x: int, y: int, world: "World") -> None:
        """Advance one cell; moving returns the robot to ground level and
        keeps any carried object with it."""
        self.x, self.y = x, y
        self.elevation_level = 0
        if self.carrying:
            obj = world.objects[self.carrying]
            obj.x, obj.y = x, y
            obj.level = 0

    def _in_reach(self, obj) -> bool:
        adjacent = (obj.x, obj.y) == self.position or (
            abs(obj.x - self.x) + abs(obj.y - self.y) == 1
        )
        return adjacent and abs(obj.level - self.elevation_level) <= 1

    def grasp(self, object_id: str, world: "World") -> None:
        """Pick up, place, or (for door objects) open.

        Picking and placing toggle: grasping a carried object sets it down
        at the robot's cell and elevation. Door objects open their cell's
        door instead, gated on the open_door capability.
        """
        obj = world.objects.get(object_id)
        if obj is None:
            raise InfeasibleAction(f"{self.name}: unknown object {object_id!r}")
        if obj.kind == "door":
            if "open_door" not in self.profile.capabilities:
                raise InfeasibleAction(f"{self.name} cannot open doors")
            if not self._in_reach(obj):
                raise InfeasibleAction(f"{self.name}: door {object_id} out of reach")
            self._require_energy(GRASP_COST, "open door")
            self.drain(GRASP_COST)
            world.grid.set_door(obj.x, obj.y, True)
            return
        if "grasp" not in self.profile.capabilities:
            raise InfeasibleAction(f"{self.name} cannot grasp (capability missing)")
        self._require_energy(GRASP_COST, "grasp")
        if self.carrying == object_id:
            self.drain(GRASP_COST)
            self.carrying = None
            obj.carried_by = None
            obj.x, obj.y = self.x, self.y
            obj.level = self.elevation_level
            return
        if self.carrying:
            raise InfeasibleAction(f"{self.name} already carrying {self.carrying}")
        if obj.carried_by:
            raise InfeasibleAction(f"{object_id} held by {obj.carried_by}")
        if not self._in_reach(obj):
            raise InfeasibleAction(f"{self.name}: object {object_id} out of reach")
        self.drain(GRASP_COST)
        self.carrying = object_id
        obj.carried_by = self.name

    def scan(self, region: Region, world: "World") -> list[str]:
        """Mark visible objects in the region as found.

        A ground robot sees surfaces up to its current elevation; aerial
        robots see every level. The robot must stand inside the region.
        """
        if "camera" not in self.profile.capabilities:
            raise InfeasibleAction(f"{self.name} has no camera")
        if not region_contains(region, self.x, self.y):
            raise InfeasibleAction(f"{self.name}: scan region must contain the robot")
        found = []
        for obj in world.objects.values():
            if not region_contains(region, obj.x, obj.y) or obj.found:
                continue
            if self.profile.kind == "aerial" or obj.level <= self.elevation_level:
                obj.found = True
                found.append(obj.id)
        return sorted(found)
