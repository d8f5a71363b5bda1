"""Assistant-side allocation and robot-side verification agents.

The allocator plans centrally from profiles, statuses, and the session
summary. Its cost model is optimistic about terrain it cannot see: when no
traversable path is known it falls back to straight-line distance instead
of declaring a task infeasible. Each robot agent then verifies assignments
against its own situation -- exact reachability, and battery with a safety
reserve -- so allocator and verifier can disagree, which is precisely what
the human gate arbitrates.

Backends are pluggable behind a validated request/response schema; every
proposal passes through ``validate_backend_output`` before any assignment
message is emitted (the hallucination guard).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from . import grid as gridmod
from .errors import BackendViolation, Unreachable
from .robots import (
    ActionCommand,
    GRASP_COST,
    JUMP_COST,
    MOVE_COST,
    RobotProfile,
    RobotStatus,
    can_perform,
    passable,
)
from .messaging import SessionSummary
from .tasks import TaskSpec, region_cells
from .world import World, check_goal

logger = logging.getLogger(__name__)

# Robot agents keep this battery reserve when verifying; the allocator
# plans without it, so marginal-battery assignments get contested.
VERIFY_BATTERY_RESERVE = 1.5

# Exhaustive assignment search bound; greedy matching above it.
EXHAUSTIVE_LIMIT = 6

ALLOC_SCHEMA = "alloc/1"


@dataclass(frozen=True)
class Assignment:
    task_id: str
    agent_id: str
    rationale: str = ""
    created_at_seq: int = 0

    def to_json(self) -> dict:
        return {
            "task": self.task_id,
            "agent": self.agent_id,
            "rationale": self.rationale,
            "created_at_seq": self.created_at_seq,
        }


@dataclass(frozen=True)
class Verdict:
    task_id: str
    agent_id: str
    accept: bool
    reason: str = ""

    def __post_init__(self) -> None:
        if not self.accept and not self.reason:
            raise ValueError("rejections must carry a reason")


@dataclass
class Program:
    """Compiled action sequence with its cost estimate.

    ``exact`` is False when optimistic distance fallbacks were used for
    segments the compiling side could not route.
    """

    actions: list[ActionCommand] = field(default_factory=list)
    energy: float = 0.0
    ticks: int = 0
    exact: bool = True


class ProgramInfeasible(Unreachable):
    """No executable program exists for this (robot, task) pair."""


def _nearest(
    world: World,
    profile: RobotProfile,
    start: tuple[int, int],
    goal_cells: list[tuple[int, int]],
    optimistic: bool,
) -> tuple[tuple[int, int], int, bool]:
    """Nearest goal cell by BFS; optimistic callers get a straight-line
    estimate when no path exists. Returns (target, distance, exact)."""
    goals = {
        (x, y)
        for (x, y) in goal_cells
        if world.grid.in_bounds(x, y)
        and ((x, y) == start or passable(profile, world.grid.at(x, y)))
    }
    if not goals:
        raise ProgramInfeasible(f"{profile.name}: no usable cell among {goal_cells}")
    if start in goals:
        return start, 0, True
    path = gridmod.shortest_path(
        world.grid, start, goals, lambda cell: passable(profile, cell)
    )
    if path is not None:
        return path[-1], len(path), True
    if not optimistic:
        raise ProgramInfeasible(f"{profile.name}: no traversable path to {sorted(goals)}")
    target = min(goals, key=lambda c: (abs(c[0] - start[0]) + abs(c[1] - start[1]), c[1], c[0]))
    distance = abs(target[0] - start[0]) + abs(target[1] - start[1])
    return target, max(distance, 1), False


def _reach_cells(world: World, x: int, y: int) -> list[tuple[int, int]]:
    cells = [(x, y)]
    cells += [(nx, ny) for nx, ny in world.grid.neighbors4(x, y)]
    return cells


def compile_program(
    profile: RobotProfile,
    start: tuple[int, int],
    task: TaskSpec,
    world: World,
    optimistic: bool = False,
) -> Program:
    """Translate a task's goal predicates into this robot's action list.

    Movement segments are costed by BFS path length; jump/climb/grasp add
    their fixed action costs. Predicates already satisfied compile to
    nothing. Raises ProgramInfeasible (strict mode) when any segment has
    no traversable route or required machinery.
    """
    program = Program()
    pos = start
    _, satisfied = check_goal(world, task)

    def move_to(goal_cells: list[tuple[int, int]]) -> None:
        nonlocal pos
        target, distance, exact = _nearest(world, profile, pos, goal_cells, optimistic)
        if target == pos:
            return
        program.actions.append(ActionCommand.move_to(*target))
        program.energy += distance * MOVE_COST
        program.ticks += math.ceil(distance / profile.max_speed)
        program.exact = program.exact and exact
        pos = target

    for pred, done in zip(task.goals, satisfied):
        if done:
            continue
        if pred.kind == "robot_at":
            if pred.subject != profile.name:
                continue  # another robot's clause
            move_to(region_cells(pred.region))
        elif pred.kind == "object_at":
            obj = world.objects.get(pred.subject)
            if obj is None:
                raise ProgramInfeasible(f"unknown object {pred.subject!r}")
            move_to(_reach_cells(world, obj.x, obj.y))
            program.actions.append(ActionCommand.grasp(obj.id))
            program.energy += GRASP_COST
            program.ticks += 1
            move_to(region_cells(pred.region))
            program.actions.append(ActionCommand.grasp(obj.id))
            program.energy += GRASP_COST
            program.ticks += 1
        elif pred.kind == "door_open":
            dx, dy = pred.region[0], pred.region[1]
            handle = next(
                (
                    o
                    for o in world.objects.values()
                    if o.kind == "door" and (o.x, o.y) == (dx, dy)
                ),
                None,
            )
            if handle is None:
                raise ProgramInfeasible(f"door at ({dx},{dy}) has no handle object")
            move_to([(nx, ny) for nx, ny in world.grid.neighbors4(dx, dy)])
            program.actions.append(ActionCommand.grasp(handle.id))
            program.energy += GRASP_COST
            program.ticks += 1
        elif pred.kind == "found":
            region = task.target
            if region is None:
                h, w = world.grid.height, world.grid.width
                region = (0, 0, w - 1, h - 1)
            # a legged robot searches raised surfaces from above when the
            # region has any; aerial robots see every level from the air
            stands = [
                (x, y)
                for (x, y) in region_cells(region)
                if any(
                    world.grid.at(nx, ny).kind == "table"
                    and world.grid.at(nx, ny).level == 1
                    for nx, ny in world.grid.neighbors4(x, y)
                )
            ]
            wants_jump = (
                "jump" in profile.capabilities
                and profile.kind != "aerial"
                and bool(stands)
            )
            if wants_jump:
                move_to(stands)
                program.actions.append(ActionCommand.jump_upward())
                program.energy += JUMP_COST
                program.ticks += 1
            else:
                move_to(region_cells(region))
            program.actions.append(ActionCommand.scan(region))
            program.ticks += 1
    return program


# -- allocation ----------------------------------------------------------

PairFilter = Callable[[str, str], bool]


@dataclass
class AllocationResult:
    assignments: list[Assignment]
    unassignable: list[str]


def estimate_cost(
    profile: RobotProfile,
    status: RobotStatus,
    task: TaskSpec,
    world: World,
) -> Optional[tuple[int, float]]:
    """Allocator-side (ticks, energy) estimate; None when even the
    optimistic compiler cannot produce a program."""
    try:
        program = compile_program(
            profile, status.position, task, world, optimistic=True
        )
    except ProgramInfeasible:
        return None
    if not program.actions and not check_goal(world, task)[0]:
        return None  # nothing this agent does can move the goal
    return program.ticks, program.energy


def allocate(
    tasks: list[TaskSpec],
    profiles: list[RobotProfile],
    statuses: dict[str, RobotStatus],
    summary: SessionSummary,
    world: World,
    pair_allowed: Optional[PairFilter] = None,
) -> AllocationResult:
    """Rule-based allocation: at most one task per agent per round,
    maximum number of tasks assigned, minimum total time cost.

    Feasible pairs need the capability set, an energy estimate within the
    agent's remaining charge, and no standing exclusion. Exhaustive search
    up to 6x6, greedy beyond. Ties break by lower energy cost, then
    lexicographic agent id. The summary is the only history context.
    """
    del summary  # history context; the rule-based policy is memoryless
    task_order = sorted((t for t in tasks), key=lambda t: t.id)
    agents = sorted(profiles, key=lambda p: p.name)
    costs: dict[tuple[str, str], tuple[int, float]] = {}
    for task in task_order:
        for profile in agents:
            status = statuses[profile.name]
            if status.fault is not None:
                continue
            if not can_perform(profile, task.required_capabilities):
                continue
            if pair_allowed and not pair_allowed(task.id, profile.name):
                continue
            estimate = estimate_cost(profile, status, task, world)
            if estimate is None:
                continue
            ticks, energy = estimate
            remaining = status.battery_pct / 100.0 * profile.battery_capacity
            if energy > remaining:
                continue
            costs[(task.id, profile.name)] = (ticks, energy)

    agent_names = [p.name for p in agents]
    if len(task_order) <= EXHAUSTIVE_LIMIT and len(agent_names) <= EXHAUSTIVE_LIMIT:
        chosen = _exhaustive_match(task_order, agent_names, costs)
    else:
        chosen = _greedy_match(task_order, agent_names, costs)

    assignments = []
    assigned_tasks = set()
    for task_id, agent_id in chosen:
        ticks, energy = costs[(task_id, agent_id)]
        assignments.append(
            Assignment(
                task_id,
                agent_id,
                rationale=f"estimated {ticks} ticks, {energy:g} energy units",
            )
        )
        assigned_tasks.add(task_id)
    unassignable = [
        t.id
        for t in task_order
        if t.id not in assigned_tasks
        and not any(key[0] == t.id for key in costs)
    ]
    return AllocationResult(assignments=assignments, unassignable=unassignable)


def _exhaustive_match(
    tasks: list[TaskSpec],
    agents: list[str],
    costs: dict[tuple[str, str], tuple[int, float]],
) -> list[tuple[str, str]]:
    """Enumerate injective task->agent maps; maximize cardinality, then
    minimize (total ticks, total energy, agent tuple)."""
    best_key: Optional[tuple] = None
    best: list[tuple[str, str]] = []
    options: list[list[Optional[str]]] = [
        [a for a in agents if (task.id, a) in costs] + [None] for task in tasks
    ]
    for combo in itertools.product(*options):
        used = [a for a in combo if a is not None]
        if len(set(used)) != len(used):
            continue
        ticks = sum(
            costs[(t.id, a)][0] for t, a in zip(tasks, combo) if a is not None
        )
        energy = sum(
            costs[(t.id, a)][1] for t, a in zip(tasks, combo) if a is not None
        )
        key = (
            -len(used),
            ticks,
            energy,
            tuple(a if a is not None else "~" for a in combo),
        )
        if best_key is None or key < best_key:
            best_key = key
            best = [(t.id, a) for t, a in zip(tasks, combo) if a is not None]
    return best


def _greedy_match(
    tasks: list[TaskSpec],
    agents: list[str],
    costs: dict[tuple[str, str], tuple[int, float]],
) -> list[tuple[str, str]]:
    pairs = sorted(
        costs.items(), key=lambda kv: (kv[1][0], kv[1][1], kv[0][1], kv[0][0])
    )
    taken_tasks: set[str] = set()
    taken_agents: set[str] = set()
    chosen = []
    for (task_id, agent_id), _ in pairs:
        if task_id in taken_tasks or agent_id in taken_agents:
            continue
        chosen.append((task_id, agent_id))
        taken_tasks.add(task_id)
        taken_agents.add(agent_id)
    return chosen


# -- verification --------------------------------------------------------

def verify(
    profile: RobotProfile,
    status: RobotStatus,
    task: TaskSpec,
    world: World,
) -> Verdict:
    """Robot-side feasibility check, recomputed from the robot's own view.

    Accept requires the capability set, a traversable route for the whole
    program from the current position, and battery covering the estimate
    with the holding reserve; the first failing check names the reason.
    """
    missing = sorted(frozenset(task.required_capabilities) - profile.capabilities)
    if missing:
        return Verdict(task.id, profile.name, False, f"missing capabilities: {', '.join(missing)}")
    if status.fault is not None:
        return Verdict(task.id, profile.name, False, f"robot faulted: {status.fault}")
    try:
        program = compile_program(profile, status.position, task, world, optimistic=False)
    except ProgramInfeasible:
        return Verdict(task.id, profile.name, False, "no traversable path")
    if not program.actions and not check_goal(world, task)[0]:
        return Verdict(
            task.id, profile.name, False, "no executable actions for this agent"
        )
    remaining = status.battery_pct / 100.0 * profile.battery_capacity
    if program.energy * VERIFY_BATTERY_RESERVE > remaining:
        return Verdict(task.id, profile.name, False, "insufficient battery")
    return Verdict(task.id, profile.name, True)


# -- backends ------------------------------------------------------------

class PlannerBackend(Protocol):  # pragma: no cover - structural type
    name: str

    def propose_allocation(self, request: dict) -> dict:
        """Request/response per the alloc/1 schema."""
        ...

    def refine_digest(self, summary: SessionSummary) -> Optional[str]:
        ...


def build_request(
    tasks: list[TaskSpec],
    profiles: list[RobotProfile],
    statuses: dict[str, RobotStatus],
    summary: SessionSummary,
    exclusions: list[tuple[str, str, str]],
    last_decision: Optional[str],
) -> dict:
    """The full planning context an external backend is allowed to see:
    tasks, profiles, statuses, the summary, and the last gate decision.
    Never the transcript."""
    return {
        "version": ALLOC_SCHEMA,
        "tasks": [t.to_json() for t in tasks],
        "profiles": [p.to_json() for p in profiles],
        "statuses": {n: s.to_json() for n, s in sorted(statuses.items())},
        "summary": summary.to_json(),
        "constraints": {
            "exclusions": [list(e) for e in exclusions],
            "last_decision": last_decision,
        },
    }


def validate_backend_output(
    proposal: dict,
    roster: list[str],
    tasks: list[TaskSpec],
) -> list[Assignment]:
    """Reject proposals naming unknown agents or tasks, duplicating a
    task, or missing required fields. Raises ValueError with the first
    violation; callers retry and eventually fall back."""
    if not isinstance(proposal, dict):
        raise ValueError("proposal must be a mapping")
    if proposal.get("version") != ALLOC_SCHEMA:
        raise ValueError(f"unsupported schema {proposal.get('version')!r}")
    raw = proposal.get("assignments")
    if not isinstance(raw, list):
        raise ValueError("proposal missing 'assignments' list")
    roster_set = set(roster)
    task_ids = {t.id for t in tasks}
    seen: set[str] = set()
    out = []
    for entry in raw:
        if not isinstance(entry, dict) or "task" not in entry or "agent" not in entry:
            raise ValueError(f"assignment entry missing fields: {entry!r}")
        task_id, agent_id = entry["task"], entry["agent"]
        if task_id not in task_ids:
            raise ValueError(f"unknown task {task_id!r}")
        if agent_id not in roster_set:
            raise ValueError(f"unknown agent {agent_id!r}")
        if task_id in seen:
            raise ValueError(f"duplicate assignment for task {task_id!r}")
        seen.add(task_id)
        out.append(Assignment(task_id, agent_id, rationale=entry.get("rationale", "")))
    return out


MAX_BACKEND_ATTEMPTS = 3


def propose_validated(
    backend: PlannerBackend,
    request: dict,
    roster: list[str],
    tasks: list[TaskSpec],
    on_violation: Optional[Callable[[str], None]] = None,
) -> list[Assignment]:
    """Query a backend with bounded retries; the single validation point
    every emitted assignment passes through.

    Raises BackendViolation after MAX_BACKEND_ATTEMPTS bad proposals so
    the caller can fall back to the rule-based allocator.
    """
    last_error = "no proposal"
    for attempt in range(1, MAX_BACKEND_ATTEMPTS + 1):
        proposal = backend.propose_allocation(request)
        try:
            return validate_backend_output(proposal, roster, tasks)
        except ValueError as exc:
            last_error = str(exc)
            logger.warning(
                "backend %s proposal %d rejected: %s", backend.name, attempt, exc
            )
            if on_violation:
                on_violation(f"attempt {attempt}: {exc}")
    raise BackendViolation(
        f"backend {backend.name} failed {MAX_BACKEND_ATTEMPTS} attempts: {last_error}"
    )


class RecordedBackend:
    """Replays captured proposal transcripts (tests, offline runs)."""

    name = "recorded"

    def __init__(self, responses: list[dict]):
        self.responses = list(responses)
        self.cursor = 0

    def propose_allocation(self, request: dict) -> dict:
        del request
        if self.cursor >= len(self.responses):
            return {"version": ALLOC_SCHEMA, "assignments": []}
        response = self.responses[self.cursor]
        self.cursor += 1
        return response

    def refine_digest(self, summary: SessionSummary) -> Optional[str]:
        del summary
        return None


class ExternalBackend:
    """Remote planner adapter: a transport callable carries the request
    dict out and a response dict back. Credentials and wire details live
    in the transport, never here."""

    name = "external"

    def __init__(self, transport: Callable[[dict], dict]):
        self.transport = transport

    def propose_allocation(self, request: dict) -> dict:
        return self.transport(request)

    def refine_digest(self, summary: SessionSummary) -> Optional[str]:
        del summary
        return None
