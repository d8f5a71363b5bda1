"""Task specifications: goal predicates, capability requirements, lifecycle.

Tasks are declarative: a set of goal predicates evaluated against the
world plus the capability tags an agent needs to attempt them. Lifecycle
state moves along a fixed transition graph; verification may be skipped
(assigned straight to executing) only in the no-verify ablation mode.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import UnknownPredicate

Region = tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive, normalized

PREDICATE_KINDS = ("object_at", "door_open", "robot_at", "found")


def normalize_region(coords: tuple[int, ...]) -> Region:
    if len(coords) == 2:
        x, y = coords
        return (x, y, x, y)
    if len(coords) == 4:
        x0, y0, x1, y1 = coords
        return (min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))
    raise ValueError(f"region needs 2 or 4 coordinates, got {coords}")


def region_contains(region: Region, x: int, y: int) -> bool:
    x0, y0, x1, y1 = region
    return x0 <= x <= x1 and y0 <= y <= y1


def region_cells(region: Region) -> list[tuple[int, int]]:
    x0, y0, x1, y1 = region
    return [(x, y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1)]


@dataclass(frozen=True)
class Predicate:
    """One goal clause: object_at / door_open / robot_at / found."""

    kind: str
    subject: str = ""  # object id, agent name, or object kind
    region: Optional[Region] = None
    count: int = 0  # found() only

    def canonical(self) -> str:
        if self.kind == "found":
            return f"found({self.subject},{self.count})"
        coords = ",".join(str(c) for c in self.region)
        if self.kind == "door_open":
            return f"door_open({coords})"
        return f"{self.kind}({self.subject},{coords})"

    def __str__(self) -> str:  # pragma: no cover - repr convenience
        return self.canonical()


_PRED_RE = re.compile(r"^\s*(?P<kind>\w+)\s*\(\s*(?P<args>[^)]*)\)\s*$")


def parse_predicate(text: str) -> Predicate:
    """Parse 'kind(arg, ...)' into a Predicate.

    Raises UnknownPredicate for unrecognized kinds or malformed arguments.
    """
    match = _PRED_RE.match(text)
    if not match:
        raise UnknownPredicate(f"cannot parse predicate: {text!r}")
    kind = match.group("kind")
    args = [a.strip() for a in match.group("args").split(",") if a.strip()]
    try:
        if kind == "door_open":
            coords = tuple(int(a) for a in args)
            return Predicate(kind, region=normalize_region(coords))
        if kind in ("object_at", "robot_at"):
            coords = tuple(int(a) for a in args[1:])
            return Predicate(kind, subject=args[0], region=normalize_region(coords))
        if kind == "found":
            return Predicate(kind, subject=args[0], count=int(args[1]))
    except (ValueError, IndexError) as exc:
        raise UnknownPredicate(f"bad arguments in predicate {text!r}: {exc}") from exc
    raise UnknownPredicate(f"unrecognized predicate kind {kind!r} in {text!r}")


class TaskState(str, Enum):
    PENDING = "pending"
    ASSIGNED = "assigned"
    VERIFIED = "verified"
    EXECUTING = "executing"
    DONE = "done"
    FAILED = "failed"
    REASSIGNING = "reassigning"


# Assigned->Executing is legal only with verification disabled. Failed is
# a sink reachable from every live state (unassignable tasks, budget
# exhaustion); Done is additionally reachable from Pending for goals that
# are already satisfied at planning time.
_TRANSITIONS: dict[TaskState, frozenset[TaskState]] = {
    TaskState.PENDING: frozenset(
        {TaskState.ASSIGNED, TaskState.DONE, TaskState.FAILED}
    ),
    TaskState.ASSIGNED: frozenset(
        {TaskState.VERIFIED, TaskState.REASSIGNING, TaskState.EXECUTING,
         TaskState.FAILED}
    ),
    TaskState.VERIFIED: frozenset({TaskState.EXECUTING, TaskState.FAILED}),
    TaskState.EXECUTING: frozenset(
        {TaskState.DONE, TaskState.FAILED, TaskState.REASSIGNING}
    ),
    TaskState.REASSIGNING: frozenset({TaskState.ASSIGNED, TaskState.FAILED}),
    TaskState.DONE: frozenset(),
    TaskState.FAILED: frozenset(),
}


@dataclass
class TaskSpec:
    id: str
    description: str = ""
    required_capabilities: frozenset[str] = frozenset()
    target: Optional[Region] = None
    goals: list[Predicate] = field(default_factory=list)
    state: TaskState = TaskState.PENDING

    def __post_init__(self) -> None:
        self.required_capabilities = frozenset(self.required_capabilities)
        if self.target is None:
            self.target = self._derive_target()

    def _derive_target(self) -> Optional[Region]:
        for pred in self.goals:
            if pred.region is not None:
                return pred.region
        return None

    def advance(self, new_state: TaskState) -> None:
        if new_state not in _TRANSITIONS[self.state]:
            raise ValueError(
                f"task {self.id}: illegal transition {self.state.value} -> {new_state.value}"
            )
        self.state = new_state

    @property
    def terminal(self) -> bool:
        return self.state in (TaskState.DONE, TaskState.FAILED)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "description": self.description,
            "requires": sorted(self.required_capabilities),
            "target": list(self.target) if self.target else None,
            "goals": [p.canonical() for p in self.goals],
            "state": self.state.value,
        }

    @staticmethod
    def from_json(data: dict) -> "TaskSpec":
        return TaskSpec(
            id=data["id"],
            description=data.get("description", ""),
            required_capabilities=frozenset(data.get("requires", ())),
            target=tuple(data["target"]) if data.get("target") else None,
            goals=[parse_predicate(g) for g in data.get("goals", ())],
            state=TaskState(data.get("state", "pending")),
        )
