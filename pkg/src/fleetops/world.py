"""Deterministic tick-based gridworld with goal predicates and scripted
exceptions.

The tick loop is the single mutator of world state: it consumes at most
one queued command per robot per tick (in ascending agent-name order),
advances active movement plans, fires any scheduled exception events, and
reports everything that happened as chat messages for the session log.
Identical (scenario, seed, command trace) always reproduces identical
trajectories.
"""

from __future__ import annotations

import copy
import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .errors import (
    ActionInfeasible,
    ScenarioParseError,
    ScenarioValidationError,
    SearchBudgetExceeded,
    UnknownPredicate,
)
from .grid import Grid
from .messaging import ChatMessage, Channel, MessageKind, Sender, valid_agent_name
from .robots import (
    LOW_BATTERY_PCT,
    ActionCommand,
    PathPlan,
    Robot,
    RobotProfile,
    RobotStatus,
    passable,
)
from .tasks import Predicate, TaskSpec, region_contains

SCENARIO_FORMAT = "scenario/1"

EXCEPTION_KINDS = ("terrain_block", "low_battery", "fault")

# Energy floor a scripted low_battery event clamps a robot to (fraction of
# capacity); below the 10% warning threshold by construction.
LOW_BATTERY_CLAMP = 0.08


@dataclass
class WorldObject:
    id: str
    kind: str
    x: int
    y: int
    level: int = 0
    found: bool = False
    carried_by: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "x": self.x,
            "y": self.y,
            "level": self.level,
            "found": self.found,
            "carried_by": self.carried_by,
        }

    @staticmethod
    def from_json(data: dict) -> "WorldObject":
        return WorldObject(**data)


@dataclass(frozen=True)
class ExceptionEvent:
    """Scripted failure: at the given tick the named robot faults.

    ``seed_mod`` (k, r) restricts firing to runs whose seed satisfies
    seed % k == r, letting benchmark scenes fail on a controlled fraction
    of seeded repetitions while staying fully declarative.
    """

    robot: str
    tick: int
    kind: str
    detail: str = ""
    attachment: Optional[str] = None
    seed_mod: Optional[tuple[int, int]] = None

    def fires_for_seed(self, seed: int) -> bool:
        if self.seed_mod is None:
            return True
        k, r = self.seed_mod
        return seed % k == r

    def to_json(self) -> dict:
        return {
            "robot": self.robot,
            "tick": self.tick,
            "kind": self.kind,
            "detail": self.detail,
            "attachment": self.attachment,
            "seed_mod": list(self.seed_mod) if self.seed_mod else None,
        }

    @staticmethod
    def from_json(data: dict) -> "ExceptionEvent":
        return ExceptionEvent(
            robot=data["robot"],
            tick=data["tick"],
            kind=data["kind"],
            detail=data.get("detail", ""),
            attachment=data.get("attachment"),
            seed_mod=tuple(data["seed_mod"]) if data.get("seed_mod") else None,
        )


class World:
    """Grid, objects, and robots advanced by the tick loop."""

    def __init__(self, grid: Grid, rng_seed: int = 0):
        self.grid = grid
        self.objects: dict[str, WorldObject] = {}
        self.robots: dict[str, Robot] = {}
        self.tick_count = 0
        self.rng_seed = rng_seed

    def add_object(self, obj: WorldObject) -> None:
        self.objects[obj.id] = obj

    def add_robot(self, profile: RobotProfile, x: int, y: int) -> Robot:
        robot = Robot(profile, x, y)
        self.robots[profile.name] = robot
        return robot

    def statuses(self) -> dict[str, RobotStatus]:
        return {name: r.get_status() for name, r in sorted(self.robots.items())}

    # -- tick loop ----------------------------------------------------

    def tick(
        self,
        actions: dict[str, ActionCommand],
        schedule: tuple[ExceptionEvent, ...] = (),
    ) -> list[ChatMessage]:
        """Advance one tick; returns emitted (unsequenced) chat messages.

        Per-robot action failures become exception messages, never errors:
        the orchestrator decides what to do about them.
        """
        for name in actions:
            if name not in self.robots:
                raise KeyError(f"no such robot {name!r}")
        self.tick_count += 1
        emitted: list[ChatMessage] = []
        for name in sorted(self.robots):
            robot = self.robots[name]
            action = actions.get(name)
            if robot.fault is not None:
                if action is not None:
                    emitted.append(
                        self._exception_msg(
                            robot, "infeasible_action", f"robot faulted: {robot.fault}"
                        )
                    )
                continue
            if action is not None:
                emitted.extend(self._start_action(robot, action))
            elif robot.busy:
                self._advance_plan(robot)
        for event in schedule:
            if event.tick == self.tick_count and event.fires_for_seed(self.rng_seed):
                emitted.append(self._fire_event(event))
        for name in sorted(self.robots):
            robot = self.robots[name]
            if robot.battery_pct < LOW_BATTERY_PCT and not robot.low_battery_warned:
                robot.low_battery_warned = True
                emitted.append(
                    self._exception_msg(
                        robot,
                        "low_battery",
                        f"battery at {robot.battery_pct:.1f}%",
                    )
                )
        return emitted

    def _start_action(self, robot: Robot, action: ActionCommand) -> list[ChatMessage]:
        try:
            if action.op == "move_to":
                plan = robot.plan_move(action.target, self)
                robot.plan = plan
                self._advance_plan(robot)
            elif action.op == "jump_upward":
                robot.jump_upward(self)
            elif action.op == "climb_up":
                robot.climb_up(self)
            elif action.op == "climb_down":
                robot.climb_down(self)
            elif action.op == "grasp":
                robot.grasp(action.object_id, self)
            elif action.op == "scan":
                robot.scan(action.region, self)
            elif action.op == "wait":
                pass
            else:
                raise ActionInfeasible(f"unknown action op {action.op!r}")
        except ActionInfeasible as exc:
            return [self._exception_msg(robot, exc.code, str(exc))]
        return []

    def _advance_plan(self, robot: Robot) -> None:
        if not robot.plan or not robot.plan.bursts:
            robot.plan = None
            return
        burst = robot.plan.bursts.pop(0)
        for (x, y) in burst:
            if robot.energy < 1:
                robot.plan = None
                return  # stops in place; low-battery warning fires below
            robot.drain(1)
            robot.enter(x, y, self)
        if not robot.plan.bursts:
            robot.plan = None

    def _fire_event(self, event: ExceptionEvent) -> ChatMessage:
        robot = self.robots[event.robot]
        robot.fault = f"{event.kind}: {event.detail}" if event.detail else event.kind
        robot.plan = None
        if event.kind == "low_battery":
            robot.energy = min(
                robot.energy, LOW_BATTERY_CLAMP * robot.profile.battery_capacity
            )
            robot.low_battery_warned = True  # event already reports it
        return self._exception_msg(
            robot, event.kind, event.detail or event.kind, attachment=event.attachment
        )

    def _exception_msg(
        self,
        robot: Robot,
        kind: str,
        detail: str,
        attachment: Optional[str] = None,
    ) -> ChatMessage:
        return ChatMessage(
            sender=Sender.robot(robot.name),
            channel=Channel.GROUP,
            kind=MessageKind.EXCEPTION,
            body=f"exception {kind}: {detail}",
            tick=self.tick_count,
            attachment=attachment,
            data={
                "agent": robot.name,
                "task": robot.current_task,
                "kind": kind,
                "detail": detail,
            },
        )

    # -- observation ---------------------------------------------------

    def state_json(self) -> dict:
        return {
            "tick": self.tick_count,
            "rng_seed": self.rng_seed,
            "map": self.grid.to_text(),
            "objects": [self.objects[k].to_json() for k in sorted(self.objects)],
            "robots": {
                name: {
                    **robot.get_status().to_json(),
                    "energy": round(robot.energy, 6),
                    "carrying": robot.carrying,
                }
                for name, robot in sorted(self.robots.items())
            },
        }

    def state_hash(self) -> str:
        payload = json.dumps(self.state_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()

    # -- checkpointing --------------------------------------------------

    def runtime_json(self) -> dict:
        """Complete mutable state, including in-flight movement plans."""
        robots = {}
        for name, r in sorted(self.robots.items()):
            robots[name] = {
                "x": r.x,
                "y": r.y,
                "elevation_level": r.elevation_level,
                "energy": r.energy,
                "current_task": r.current_task,
                "progress": r.progress,
                "fault": r.fault,
                "carrying": r.carrying,
                "low_battery_warned": r.low_battery_warned,
                "plan": (
                    {"bursts": [[list(c) for c in b] for b in r.plan.bursts],
                     "cost": r.plan.cost}
                    if r.plan
                    else None
                ),
            }
        return {
            "tick": self.tick_count,
            "rng_seed": self.rng_seed,
            "map": self.grid.to_text(),
            "objects": [self.objects[k].to_json() for k in sorted(self.objects)],
            "robots": robots,
        }

    @staticmethod
    def from_runtime_json(data: dict, profiles: list[RobotProfile]) -> "World":
        world = World(Grid.from_text(data["map"]), data["rng_seed"])
        world.tick_count = data["tick"]
        for entry in data["objects"]:
            world.add_object(WorldObject.from_json(entry))
        by_name = {p.name: p for p in profiles}
        for name, r in data["robots"].items():
            robot = world.add_robot(by_name[name], r["x"], r["y"])
            robot.elevation_level = r["elevation_level"]
            robot.energy = r["energy"]
            robot.current_task = r["current_task"]
            robot.progress = r["progress"]
            robot.fault = r["fault"]
            robot.carrying = r["carrying"]
            robot.low_battery_warned = r["low_battery_warned"]
            if r["plan"]:
                robot.plan = PathPlan(
                    bursts=[[tuple(c) for c in b] for b in r["plan"]["bursts"]],
                    cost=r["plan"]["cost"],
                )
        return world


def check_goal(world: World, task: TaskSpec) -> tuple[bool, list[bool]]:
    """Evaluate every goal predicate of a task against the world.

    Pure function of the current world; goal truth is not monotone
    (objects can be carried away again).
    """
    results = [_eval_predicate(world, p) for p in task.goals]
    return all(results), results


def _eval_predicate(world: World, pred: Predicate) -> bool:
    if pred.kind == "object_at":
        obj = world.objects.get(pred.subject)
        if obj is None:
            return False
        return obj.carried_by is None and region_contains(pred.region, obj.x, obj.y)
    if pred.kind == "door_open":
        x, y = pred.region[0], pred.region[1]
        cell = world.grid.at(x, y)
        return cell.kind == "door" and cell.open
    if pred.kind == "robot_at":
        robot = world.robots.get(pred.subject)
        if robot is None:
            return False
        return region_contains(pred.region, robot.x, robot.y)
    if pred.kind == "found":
        n = sum(1 for o in world.objects.values() if o.kind == pred.subject and o.found)
        return n >= pred.count
    raise UnknownPredicate(f"cannot evaluate predicate kind {pred.kind!r}")


def task_progress(world: World, task: TaskSpec) -> float:
    """Fraction of satisfied goal predicates (1.0 for empty goals)."""
    if not task.goals:
        return 1.0
    _, per = check_goal(world, task)
    return sum(per) / len(per)


# -- scenario files -----------------------------------------------------


@dataclass
class ManualRef:
    agent: str
    name: str
    text: str

    def to_json(self) -> dict:
        return {"agent": self.agent, "name": self.name, "text": self.text}


@dataclass
class Scenario:
    """Declarative test scenario: world layout, roster, tasks, scripted
    exceptions, and the difficulty/budget envelope."""

    name: str
    map_text: str
    profiles: list[RobotProfile]
    starts: dict[str, tuple[int, int]]
    objects: list[WorldObject]
    tasks: list[TaskSpec]
    exception_schedule: tuple[ExceptionEvent, ...] = ()
    min_steps: int = 1
    max_ticks: int = 200
    seed: int = 0
    manuals: list[ManualRef] = field(default_factory=list)

    def build_world(self, seed: Optional[int] = None) -> World:
        """Fresh independent world for one run."""
        world = World(Grid.from_text(self.map_text), seed if seed is not None else self.seed)
        for obj in self.objects:
            world.add_object(copy.deepcopy(obj))
        for profile in self.profiles:
            x, y = self.starts[profile.name]
            world.add_robot(profile, x, y)
        return world

    def fresh_tasks(self) -> list[TaskSpec]:
        return [TaskSpec.from_json(t.to_json()) for t in self.tasks]

    def roster(self) -> list[str]:
        return [p.name for p in self.profiles]

    def to_json(self) -> dict:
        return {
            "format": SCENARIO_FORMAT,
            "name": self.name,
            "map": self.map_text,
            "robots": [
                {**p.to_json(), "start": list(self.starts[p.name])}
                for p in self.profiles
            ],
            "objects": [o.to_json() for o in self.objects],
            "tasks": [t.to_json() for t in self.tasks],
            "exceptions": [e.to_json() for e in self.exception_schedule],
            "min_steps": self.min_steps,
            "max_ticks": self.max_ticks,
            "seed": self.seed,
            "manuals": [m.to_json() for m in self.manuals],
        }

    def content_hash(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def parse_scenario(data: dict, base_dir: Optional[Path] = None) -> Scenario:
    """Build and fully validate a Scenario from parsed file data.

    Raises ScenarioParseError on structural problems and
    ScenarioValidationError (listing all violations) on invariant breaches.
    """
    if not isinstance(data, dict):
        raise ScenarioParseError("scenario file must be a mapping")
    fmt = data.get("format")
    if fmt != SCENARIO_FORMAT:
        raise ScenarioParseError(
            f"unsupported or missing format header {fmt!r}; expected {SCENARIO_FORMAT!r}"
        )
    if "map" not in data or "robots" not in data:
        raise ScenarioParseError("scenario needs 'map' and 'robots' sections")
    try:
        grid = Grid.from_text(data["map"])
    except ValueError as exc:
        raise ScenarioParseError(f"bad map: {exc}") from exc

    violations: list[str] = []
    profiles: list[RobotProfile] = []
    starts: dict[str, tuple[int, int]] = {}
    for entry in data["robots"]:
        try:
            profile = RobotProfile.from_json(entry)
        except (ValueError, KeyError) as exc:
            violations.append(f"robot entry {entry.get('name', '?')!r}: {exc}")
            continue
        if not valid_agent_name(profile.name):
            violations.append(f"invalid agent name {profile.name!r}")
        if profile.name in starts:
            violations.append(f"duplicate robot name {profile.name!r}")
        start = entry.get("start")
        if not start or len(start) != 2 or not grid.in_bounds(*start):
            violations.append(f"robot {profile.name!r}: start {start} out of bounds")
            start = (0, 0)
        profiles.append(profile)
        starts[profile.name] = tuple(start)
    roster = {p.name for p in profiles}
    if not profiles:
        violations.append("scenario needs at least one robot")

    objects: list[WorldObject] = []
    object_ids: set[str] = set()
    for entry in data.get("objects", ()):
        try:
            obj = WorldObject.from_json(entry)
        except (TypeError, KeyError) as exc:
            violations.append(f"object entry {entry!r}: {exc}")
            continue
        if obj.id in object_ids:
            violations.append(f"duplicate object id {obj.id!r}")
        object_ids.add(obj.id)
        if not grid.in_bounds(obj.x, obj.y):
            violations.append(f"object {obj.id!r} at ({obj.x},{obj.y}) out of bounds")
        objects.append(obj)

    tasks: list[TaskSpec] = []
    task_ids: set[str] = set()
    for entry in data.get("tasks", ()):
        try:
            task = TaskSpec.from_json(entry)
        except (UnknownPredicate, KeyError, ValueError) as exc:
            violations.append(f"task entry {entry.get('id', '?')!r}: {exc}")
            continue
        if task.id in task_ids:
            violations.append(f"duplicate task id {task.id!r}")
        task_ids.add(task.id)
        tasks.append(task)
        for pred in task.goals:
            if pred.kind == "object_at" and pred.subject not in object_ids:
                violations.append(f"task {task.id}: unknown object {pred.subject!r}")
            if pred.kind == "robot_at" and pred.subject not in roster:
                violations.append(f"task {task.id}: unknown robot {pred.subject!r}")
            if pred.region is not None:
                x0, y0, x1, y1 = pred.region
                if not (grid.in_bounds(x0, y0) and grid.in_bounds(x1, y1)):
                    violations.append(
                        f"task {task.id}: region {pred.region} out of bounds"
                    )
            if pred.kind == "door_open":
                x, y = pred.region[0], pred.region[1]
                if grid.in_bounds(x, y) and grid.at(x, y).kind != "door":
                    violations.append(f"task {task.id}: ({x},{y}) is not a door")
    max_ticks = int(data.get("max_ticks", 200))
    min_steps_declared = int(data.get("min_steps", 1))
    if min_steps_declared < 1:
        violations.append("min_steps must be >= 1")
    if max_ticks < 1:
        violations.append("max_ticks must be >= 1")

    schedule: list[ExceptionEvent] = []
    for entry in data.get("exceptions", ()):
        try:
            event = ExceptionEvent.from_json(entry)
        except (TypeError, KeyError) as exc:
            violations.append(f"exception entry {entry!r}: {exc}")
            continue
        if event.robot not in roster:
            violations.append(f"exception names unknown robot {event.robot!r}")
        if event.kind not in EXCEPTION_KINDS:
            violations.append(f"unknown exception kind {event.kind!r}")
        if not 0 < event.tick <= max_ticks:
            violations.append(
                f"exception tick {event.tick} outside 1..max_ticks {max_ticks}"
            )
        schedule.append(event)

    manuals: list[ManualRef] = []
    for entry in data.get("manuals", ()):
        agent = entry.get("agent")
        if agent not in roster:
            violations.append(f"manual for unknown agent {agent!r}")
            continue
        if "text" in entry:
            manuals.append(ManualRef(agent, entry.get("name", "manual"), entry["text"]))
        elif "path" in entry:
            path = (base_dir or Path(".")) / entry["path"]
            if not path.exists():
                violations.append(f"manual file not found: {entry['path']}")
                continue
            manuals.append(ManualRef(agent, entry.get("name", path.stem), path.read_text()))
        else:
            violations.append(f"manual entry for {agent!r} needs 'text' or 'path'")

    if violations:
        raise ScenarioValidationError(violations)

    return Scenario(
        name=data.get("name", "unnamed"),
        map_text=Grid.from_text(data["map"]).to_text(),
        profiles=profiles,
        starts=starts,
        objects=objects,
        tasks=tasks,
        exception_schedule=tuple(schedule),
        min_steps=min_steps_declared,
        max_ticks=max_ticks,
        seed=int(data.get("seed", 0)),
        manuals=manuals,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from exc
    return parse_scenario(data, base_dir=path.parent)


def save_scenario(scenario: Scenario) -> str:
    """Canonical text form: stable key order, stable layout."""
    data = scenario.to_json()
    data["manuals"] = [
        {"agent": m.agent, "name": m.name, "text": m.text} for m in scenario.manuals
    ]
    return yaml.safe_dump(data, sort_keys=True, default_flow_style=False, width=100)


# -- difficulty oracle ---------------------------------------------------


def min_steps(scenario: Scenario, budget: int = 10_000_000) -> int:
    """Minimum number of primitive robot actions to satisfy every task.

    Breadth-first search over joint states where one robot performs one
    unit action per step (1-cell move, jump, climb, grasp/open, or a 3x3
    scan). Battery is ignored; this is the scene-difficulty reference, not
    the execution step counter. Raises SearchBudgetExceeded past the node
    budget.
    """
    world = scenario.build_world()
    goals: list[Predicate] = [p for t in scenario.tasks for p in t.goals]
    names = sorted(world.robots)
    object_ids = sorted(world.objects)
    door_cells = world.grid.door_cells()
    door_index = {cell: idx for idx, cell in enumerate(door_cells)}
    grid = world.grid

    # per-robot static tables: the inner loop must not touch grid cells
    all_cells = [(x, y) for y in range(grid.height) for x in range(grid.width)]
    moves: list[dict] = []  # (x,y) -> [(nx, ny, door_idx or -1)]
    traits: list[tuple] = []  # (jump, climb, grasp, open, camera, aerial)
    for name in names:
        profile = world.robots[name].profile
        table = {}
        for (x, y) in all_cells:
            options = []
            for nx, ny in grid.neighbors4(x, y):
                cell = grid.at(nx, ny)
                if cell.kind == "door":
                    options.append((nx, ny, door_index[(nx, ny)]))
                elif passable(profile, cell):
                    options.append((nx, ny, -1))
            table[(x, y)] = options
        moves.append(table)
        caps = profile.capabilities
        traits.append(
            (
                "jump" in caps,
                "climb_stairs" in caps,
                "grasp" in caps,
                "open_door" in caps,
                "camera" in caps,
                profile.kind == "aerial",
            )
        )
    adjacent_table_levels = {
        (x, y): frozenset(
            grid.at(nx, ny).level
            for nx, ny in grid.neighbors4(x, y)
            if grid.at(nx, ny).kind == "table"
        )
        for (x, y) in all_cells
    }
    stairs = {(x, y) for (x, y) in all_cells if grid.at(x, y).kind == "stairs"}
    object_kind = [world.objects[oid].kind for oid in object_ids]
    door_objects = {j for j, kind in enumerate(object_kind) if kind == "door"}

    # goal predicates resolved to state indices up front
    checks = []
    for pred in goals:
        if pred.kind == "object_at":
            checks.append(("object_at", object_ids.index(pred.subject), pred.region))
        elif pred.kind == "robot_at":
            checks.append(("robot_at", names.index(pred.subject), pred.region))
        elif pred.kind == "door_open":
            checks.append(("door_open", door_index[(pred.region[0], pred.region[1])], None))
        elif pred.kind == "found":
            members = [j for j, kind in enumerate(object_kind) if kind == pred.subject]
            checks.append(("found", members, pred.count))

    def initial_state():
        robots = tuple(
            (world.robots[n].x, world.robots[n].y, 0, -1) for n in names
        )
        objects = tuple(
            (
                world.objects[oid].x,
                world.objects[oid].y,
                world.objects[oid].level,
                world.objects[oid].found,
            )
            for oid in object_ids
        )
        doors = tuple(grid.at(x, y).open for (x, y) in door_cells)
        return robots, objects, doors

    def satisfied(state) -> bool:
        robots, objects, doors = state
        for kind, key, extra in checks:
            if kind == "object_at":
                ox, oy, _, _ = objects[key]
                if any(r[3] == key for r in robots) or not region_contains(extra, ox, oy):
                    return False
            elif kind == "robot_at":
                if not region_contains(extra, robots[key][0], robots[key][1]):
                    return False
            elif kind == "door_open":
                if not doors[key]:
                    return False
            else:  # found
                if sum(1 for j in key if objects[j][3]) < extra:
                    return False
        return True

    def successors(state):
        robots, objects, doors = state
        for i in range(len(names)):
            has_jump, has_climb, has_grasp, has_open, has_camera, aerial = traits[i]
            x, y, elev, carrying = robots[i]
            # unit moves (carried object rides along at ground level)
            for nx, ny, didx in moves[i][(x, y)]:
                if didx >= 0 and not doors[didx]:
                    continue
                new_robots = robots[:i] + ((nx, ny, 0, carrying),) + robots[i + 1:]
                new_objects = objects
                if carrying >= 0:
                    f = objects[carrying][3]
                    new_objects = (
                        objects[:carrying] + ((nx, ny, 0, f),) + objects[carrying + 1:]
                    )
                yield new_robots, new_objects, doors
            # jump onto an adjacent surface one level up
            if has_jump and (elev + 1) in adjacent_table_levels[(x, y)]:
                yield (
                    robots[:i] + ((x, y, elev + 1, carrying),) + robots[i + 1:],
                    objects,
                    doors,
                )
            # climb
            if has_climb and (x, y) in stairs:
                for delta in (1, -1):
                    if elev + delta < 0:
                        continue
                    yield (
                        robots[:i] + ((x, y, elev + delta, carrying),) + robots[i + 1:],
                        objects,
                        doors,
                    )
            # grasp / place / open
            for j in range(len(object_ids)):
                ox, oy, olevel, f = objects[j]
                in_reach = (
                    (ox, oy) == (x, y) or abs(ox - x) + abs(oy - y) == 1
                ) and abs(olevel - elev) <= 1
                if j in door_objects:
                    didx = door_index.get((ox, oy))
                    if has_open and in_reach and didx is not None and not doors[didx]:
                        yield (
                            robots,
                            objects,
                            doors[:didx] + (True,) + doors[didx + 1:],
                        )
                    continue
                if not has_grasp:
                    continue
                if carrying == j:  # set it down here
                    yield (
                        robots[:i] + ((x, y, elev, -1),) + robots[i + 1:],
                        objects[:j] + ((x, y, elev, f),) + objects[j + 1:],
                        doors,
                    )
                elif carrying < 0 and in_reach and not any(r[3] == j for r in robots):
                    yield (
                        robots[:i] + ((x, y, elev, j),) + robots[i + 1:],
                        objects,
                        doors,
                    )
            # scan the 3x3 neighborhood
            if has_camera:
                new_objects = None
                for j in range(len(object_ids)):
                    ox, oy, olevel, f = objects[j]
                    if f or abs(ox - x) > 1 or abs(oy - y) > 1:
                        continue
                    if aerial or olevel <= elev:
                        if new_objects is None:
                            new_objects = list(objects)
                        new_objects[j] = (ox, oy, olevel, True)
                if new_objects is not None:
                    yield robots, tuple(new_objects), doors

    start = initial_state()
    if satisfied(start):
        return 0
    seen = {start}
    queue = deque([(start, 0)])
    expanded = 0
    while queue:
        state, depth = queue.popleft()
        expanded += 1
        if expanded > budget:
            raise SearchBudgetExceeded(f"searched {expanded} states")
        for nxt in successors(state):
            if nxt in seen:
                continue
            if satisfied(nxt):
                return depth + 1
            seen.add(nxt)
            if len(seen) > budget:
                raise SearchBudgetExceeded(f"visited {len(seen)} states")
            queue.append((nxt, depth + 1))
    raise SearchBudgetExceeded("goal unreachable within the searched space")
