"""The session orchestrator: input aggregation, delegation with
verification, execution, and exception-driven reallocation.

One session owns one world, one message log, and one planning loop.
Ablation modes strip supervision layers: ``full`` keeps the human gate
and per-robot verification, ``no_human`` drops the gate, and
``no_human_no_verify`` additionally dispatches assignments unverified.
Every state change flows through the log, so step counts and outcomes are
recomputable from the persisted record alone.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import queue as queue_mod
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from .errors import (
    BackendViolation,
    ConfigError,
    CorruptCheckpoint,
    DecisionTimeout,
    SessionClosed,
    UnknownAgent,
)
from .knowledge import KnowledgeBase
from .messaging import (
    BROADCAST,
    Channel,
    ChatMessage,
    MessageKind,
    MessageLog,
    Sender,
    SessionSummary,
    format_assignment,
    parse_mentions,
    route,
    summarize,
)
from .planner import (
    Assignment,
    ProgramInfeasible,
    RecordedBackend,
    ExternalBackend,
    allocate,
    build_request,
    compile_program,
    propose_validated,
    verify,
)
from .robots import ActionCommand, Robot
from .tasks import TaskSpec, TaskState
from .world import Scenario, World, check_goal, task_progress

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "checkpoint/1"
REPORT_FORMAT = "report/1"

# Exception codes that mark a dispatched action as infeasible.
INFEASIBLE_CODES = frozenset(
    {"unreachable", "battery_insufficient", "infeasible_action"}
)


class SessionMode(str, Enum):
    FULL = "full"
    NO_HUMAN = "no_human"
    NO_HUMAN_NO_VERIFY = "no_human_no_verify"

    @property
    def human_gate(self) -> bool:
        return self is SessionMode.FULL

    @property
    def verification(self) -> bool:
        return self is not SessionMode.NO_HUMAN_NO_VERIFY


class Phase(str, Enum):
    INIT = "init"
    ALLOCATING = "allocating"
    VERIFYING = "verifying"
    EXECUTING = "executing"
    REALLOCATING = "reallocating"
    COMPLETED = "completed"
    FAILED = "failed"


_PHASE_TRANSITIONS: dict[Phase, frozenset[Phase]] = {
    Phase.INIT: frozenset({Phase.ALLOCATING}),
    Phase.ALLOCATING: frozenset({Phase.VERIFYING, Phase.COMPLETED, Phase.FAILED}),
    Phase.VERIFYING: frozenset(
        {Phase.EXECUTING, Phase.REALLOCATING, Phase.COMPLETED, Phase.FAILED}
    ),
    Phase.EXECUTING: frozenset(
        {Phase.REALLOCATING, Phase.COMPLETED, Phase.FAILED}
    ),
    Phase.REALLOCATING: frozenset({Phase.VERIFYING, Phase.COMPLETED, Phase.FAILED}),
    Phase.COMPLETED: frozenset(),
    Phase.FAILED: frozenset(),
}

DECISION_POLICIES = ("interactive", "scripted", "auto_yes", "oracle")
BACKENDS = ("rule_based", "external", "recorded")


@dataclass
class SessionConfig:
    mode: SessionMode = SessionMode.FULL
    seed: int = 0
    max_ticks: Optional[int] = None  # None: scenario budget
    decision_policy: str = "oracle"
    scripted_decisions: tuple[str, ...] = ()
    decision_timeout: Optional[float] = None  # interactive only; None blocks
    backend: str = "rule_based"
    recorded_responses: tuple[dict, ...] = ()
    external_transport: Optional[Callable[[dict], dict]] = None

    def validate(self) -> None:
        if self.decision_policy not in DECISION_POLICIES:
            raise ConfigError(f"unknown decision policy {self.decision_policy!r}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.decision_policy == "interactive" and self.backend == "recorded":
            raise ConfigError(
                "interactive decisions cannot drive a recorded backend replay"
            )
        if self.decision_policy == "scripted" and not self.scripted_decisions:
            raise ConfigError("scripted policy needs a decision list")
        if self.backend == "recorded" and not self.recorded_responses:
            raise ConfigError("recorded backend needs captured responses")
        if self.backend == "external" and self.external_transport is None:
            raise ConfigError("external backend needs a transport")
        if self.max_ticks is not None and self.max_ticks < 1:
            raise ConfigError("max_ticks must be >= 1")
        for d in self.scripted_decisions:
            if d not in ("yes", "no"):
                raise ConfigError(f"scripted decisions must be yes/no, got {d!r}")

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "seed": self.seed,
            "max_ticks": self.max_ticks,
            "decision_policy": self.decision_policy,
            "scripted_decisions": list(self.scripted_decisions),
            "decision_timeout": self.decision_timeout,
            "backend": self.backend,
            "recorded_responses": list(self.recorded_responses),
        }

    @staticmethod
    def from_json(data: dict) -> "SessionConfig":
        return SessionConfig(
            mode=SessionMode(data["mode"]),
            seed=data["seed"],
            max_ticks=data.get("max_ticks"),
            decision_policy=data.get("decision_policy", "oracle"),
            scripted_decisions=tuple(data.get("scripted_decisions", ())),
            decision_timeout=data.get("decision_timeout"),
            backend=data.get("backend", "rule_based"),
            recorded_responses=tuple(data.get("recorded_responses", ())),
        )


@dataclass
class SessionReport:
    scenario: str
    scenario_hash: str
    mode: str
    seed: int
    outcome: dict[str, str]
    step_count: int
    tick_count: int
    dispatched_actions: int
    decisions: int
    infeasible_dispatches: int
    log_records: list[dict]
    world_hashes: list[str]

    @property
    def success(self) -> bool:
        return bool(self.outcome) and all(v == "done" for v in self.outcome.values())

    def to_json(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "scenario": self.scenario,
            "scenario_hash": self.scenario_hash,
            "mode": self.mode,
            "seed": self.seed,
            "outcome": dict(sorted(self.outcome.items())),
            "success": self.success,
            "step_count": self.step_count,
            "tick_count": self.tick_count,
            "dispatched_actions": self.dispatched_actions,
            "decisions": self.decisions,
            "infeasible_dispatches": self.infeasible_dispatches,
            "log": self.log_records,
            "world_hashes": self.world_hashes,
        }

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()

    @staticmethod
    def from_json(data: dict) -> "SessionReport":
        return SessionReport(
            scenario=data["scenario"],
            scenario_hash=data["scenario_hash"],
            mode=data["mode"],
            seed=data["seed"],
            outcome=data["outcome"],
            step_count=data["step_count"],
            tick_count=data["tick_count"],
            dispatched_actions=data["dispatched_actions"],
            decisions=data["decisions"],
            infeasible_dispatches=data["infeasible_dispatches"],
            log_records=data["log"],
            world_hashes=data["world_hashes"],
        )


@dataclass
class _PendingCommand:
    kind: str
    args: tuple
    reply: "queue_mod.Queue"


# -- decision providers --------------------------------------------------

class ScriptedDecider:
    """Consumes a fixed yes/no list; exhausted lists fall back to yes
    (the zero-delay timeout default for benchmark runs)."""

    def __init__(self, answers: tuple[str, ...], cursor: int = 0):
        self.answers = tuple(answers)
        self.cursor = cursor

    def decide(self, question: str, context: str) -> str:
        del question, context
        if self.cursor < len(self.answers):
            answer = self.answers[self.cursor]
            self.cursor += 1
            return answer
        return "yes"


class AutoYesDecider:
    def decide(self, question: str, context: str) -> str:
        del question, context
        return "yes"


class OracleDecider:
    """Answers with the ground truth the session computes by simulating
    the contested assignment (the always-correct supervisor)."""

    def __init__(self, truth: Callable[[str, str], bool]):
        self.truth = truth
        self.pending_pair: Optional[tuple[str, str]] = None

    def decide(self, question: str, context: str) -> str:
        del question, context
        if self.pending_pair is None:
            return "no"
        task_id, agent_id = self.pending_pair
        return "yes" if self.truth(task_id, agent_id) else "no"


class InteractiveDecider:
    """Decisions arrive on a queue (fed by the gateway); simulation keeps
    ticking while planning blocks."""

    def __init__(self, timeout: Optional[float] = None):
        self.queue: "queue_mod.Queue[str]" = queue_mod.Queue()
        self.timeout = timeout
        self.idle_tick: Optional[Callable[[], None]] = None

    def submit(self, decision: str) -> None:
        self.queue.put(decision)

    def decide(self, question: str, context: str) -> str:
        del question, context
        deadline = None if self.timeout is None else time.monotonic() + self.timeout
        while True:
            try:
                return self.queue.get(timeout=0.02)
            except queue_mod.Empty:
                if self.idle_tick is not None:
                    self.idle_tick()
                if deadline is not None and time.monotonic() > deadline:
                    raise DecisionTimeout("no decision before timeout")


# -- the session ----------------------------------------------------------

class Session:
    """One live run of a scenario under a supervision mode."""

    def __init__(
        self,
        config: SessionConfig,
        scenario: Scenario,
        event_sink: Optional[Callable[[str, dict], None]] = None,
    ):
        config.validate()
        self.config = config
        self.scenario = scenario
        self.event_sink = event_sink
        self.world: World = scenario.build_world(seed=config.seed)
        self.tasks: dict[str, TaskSpec] = {t.id: t for t in scenario.fresh_tasks()}
        self.task_order = [t.id for t in scenario.tasks]
        self.log = MessageLog()
        self.kb = KnowledgeBase()
        self.summary = SessionSummary()
        self.phase = Phase.INIT
        self.step_count = 0
        self.dispatched_actions = 0
        self.decisions = 0
        self.infeasible_dispatches = 0
        self.max_ticks = config.max_ticks or scenario.max_ticks
        self.assignments: dict[str, str] = {}  # live task -> agent
        self.forced: set[str] = set()  # human-overridden tasks skip verification
        self.programs: dict[str, deque[ActionCommand]] = {}
        self.exclusions: list[tuple[str, str, str]] = []
        self.agent_contexts: dict[str, list[int]] = {n: [] for n in scenario.roster()}
        self.human_queues: dict[str, deque[ActionCommand]] = {
            n: deque() for n in scenario.roster()
        }
        self.world_hashes: list[str] = []
        self.last_decision: Optional[str] = None
        self.decider = self._build_decider()
        self.backend = self._build_backend()
        # cross-thread commands drain at tick boundaries and gate waits
        self.commands: "queue_mod.Queue[_PendingCommand]" = queue_mod.Queue()

    # -- wiring -------------------------------------------------------

    def _build_decider(self):
        policy = self.config.decision_policy
        if policy == "scripted":
            return ScriptedDecider(self.config.scripted_decisions)
        if policy == "auto_yes":
            return AutoYesDecider()
        if policy == "oracle":
            return OracleDecider(self._ground_truth_feasible)
        decider = InteractiveDecider(self.config.decision_timeout)
        decider.idle_tick = self._idle_tick
        return decider

    def _build_backend(self):
        if self.config.backend == "recorded":
            return RecordedBackend(list(self.config.recorded_responses))
        if self.config.backend == "external":
            return ExternalBackend(self.config.external_transport)
        return None  # rule-based runs in-process

    @property
    def roster(self) -> list[str]:
        return self.scenario.roster()

    @property
    def live(self) -> bool:
        return self.phase not in (Phase.COMPLETED, Phase.FAILED)

    def _emit(self, event_type: str, payload: dict) -> None:
        if self.event_sink is not None:
            self.event_sink(event_type, payload)

    def _set_phase(self, new: Phase) -> None:
        if new not in _PHASE_TRANSITIONS[self.phase]:
            raise RuntimeError(f"illegal phase transition {self.phase} -> {new}")
        old, self.phase = self.phase, new
        self._emit("phase_change", {"from": old.value, "to": new.value})

    def _append(self, msg: ChatMessage) -> int:
        """Single entry point to the log: sequences, routes, and tracks
        per-agent context growth."""
        plan = route(msg, self.roster)
        seq = self.log.append(msg)
        sender = msg.sender
        for agent in sorted(plan.context_set):
            if sender.role.value == "robot" and sender.name == agent:
                continue  # a robot's own output is not its input context
            self.agent_contexts[agent].append(seq)
        stored = self.log.entries[-1]
        event_type = {
            MessageKind.TASK_ASSIGNMENT: "assignment",
            MessageKind.EXCEPTION: "exception",
            MessageKind.STATUS_UPDATE: "status",
        }.get(msg.kind, "message")
        self._emit(event_type, stored.to_json())
        return seq

    def _group(self, sender: Sender, kind: MessageKind, body: str,
               mentions: tuple[str, ...] = (), data: Optional[dict] = None,
               attachment: Optional[str] = None) -> int:
        return self._append(
            ChatMessage(
                sender=sender,
                channel=Channel.GROUP,
                kind=kind,
                body=body,
                mentions=mentions,
                tick=self.world.tick_count,
                data=data,
                attachment=attachment,
            )
        )

    # -- lifecycle ------------------------------------------------------

    def start(self) -> None:
        """Step 1: load profiles, ingest manuals, post the task brief."""
        for manual in self.scenario.manuals:
            doc_id, chunks = self.kb.ingest_manual(manual.agent, manual.text, manual.name)
            sheet = self.kb.spec_sheet(manual.agent, manual.name)
            self._group(
                Sender.assistant(),
                MessageKind.INFO,
                f"ingested manual {manual.name!r} for {manual.agent} ({chunks} chunks)",
                data={"manual": {"agent": manual.agent, "doc_id": doc_id,
                                 "chunks": chunks, "spec": sheet.to_json()}},
            )
        brief = "; ".join(
            f"{t.id}: {t.description}" if t.description else t.id
            for t in self.tasks.values()
        )
        self._group(
            Sender.human(),
            MessageKind.HUMAN_COMMAND,
            f"Please complete the following tasks: {brief}",
        )
        self._set_phase(Phase.ALLOCATING)

    def run_to_completion(self) -> SessionReport:
        while self.live:
            self.step_phase()
        self.drain_commands()
        return self.report()

    def step_phase(self) -> None:
        self._process_commands()
        if self.phase is Phase.INIT:
            self.start()
        elif self.phase in (Phase.ALLOCATING, Phase.REALLOCATING):
            self._plan_round()
        elif self.phase is Phase.VERIFYING:
            self._verify_round()
        elif self.phase is Phase.EXECUTING:
            self._execute_until_event()

    # -- cross-thread command queue ------------------------------------

    def submit_command(self, kind: str, *args, timeout: float = 30.0):
        """Run a command on the session thread at its next safe point.

        Gateway clients must use this instead of calling mutators
        directly; it serializes all external commands with the control
        loop (and with pending human gates, which keep draining).
        """
        if not self.live:
            raise SessionClosed(f"session is {self.phase.value}")
        box: "queue_mod.Queue" = queue_mod.Queue(1)
        self.commands.put(_PendingCommand(kind, args, box))
        try:
            ok, value = box.get(timeout=timeout)
        except queue_mod.Empty:
            raise SessionClosed("session stopped before handling the command")
        if not ok:
            raise value
        return value

    def _process_commands(self) -> None:
        while True:
            try:
                cmd = self.commands.get_nowait()
            except queue_mod.Empty:
                return
            try:
                if cmd.kind == "human_command":
                    value = self.human_command(*cmd.args)
                elif cmd.kind == "checkpoint":
                    value = self.checkpoint()
                elif cmd.kind == "inspect":
                    value = self.inspect()
                elif cmd.kind == "upload_manual":
                    value = self.upload_manual(*cmd.args)
                else:
                    raise ValueError(f"unknown session command {cmd.kind!r}")
                cmd.reply.put((True, value))
            except Exception as exc:  # delivered to the waiting caller
                cmd.reply.put((False, exc))

    def drain_commands(self) -> None:
        while True:
            try:
                cmd = self.commands.get_nowait()
            except queue_mod.Empty:
                return
            cmd.reply.put((False, SessionClosed(f"session is {self.phase.value}")))

    def inspect(self) -> dict:
        """Introspection snapshot: phase, steps, per-agent contexts."""
        return {
            "phase": self.phase.value,
            "step_count": self.step_count,
            "contexts": {a: list(s) for a, s in sorted(self.agent_contexts.items())},
            "statuses": {n: s.to_json() for n, s in self.world.statuses().items()},
        }

    def upload_manual(self, agent: str, text: str, name: str) -> dict:
        """Mid-session manual drop: ingest into the agent's private store
        and surface the extracted spec sheet in the chat."""
        if agent not in self.roster:
            raise UnknownAgent(f"unknown agent {agent!r}")
        doc_id, chunks = self.kb.ingest_manual(agent, text, name)
        sheet = self.kb.spec_sheet(agent, name)
        version = self.kb.document(agent, name).version
        result = {
            "agent": agent,
            "doc_id": doc_id,
            "chunks": chunks,
            "version": version,
            "spec": sheet.to_json(),
        }
        self._group(
            Sender.assistant(),
            MessageKind.INFO,
            f"ingested manual {name!r} for {agent} ({chunks} chunks, v{version})",
            data={"manual": result},
        )
        return result

    # -- planning -------------------------------------------------------

    def _robot(self, name: str) -> Robot:
        return self.world.robots[name]

    def _idle_agents(self) -> list[str]:
        return [
            n
            for n in sorted(self.world.robots)
            if self._robot(n).current_task is None and self._robot(n).fault is None
        ]

    def _pair_allowed(self, task_id: str, agent_id: str) -> bool:
        """Reallocation progress rule: an excluded (task, agent) pair stays
        blocked while its reject reason would still hold; human vetoes and
        execution failures are final."""
        for t, a, reason in self.exclusions:
            if (t, a) != (task_id, agent_id):
                continue
            if reason in ("human_no", "exec_failed", "stalled"):
                return False
            # verify-style reasons: retry only once the verdict would flip
            verdict = verify(
                self._robot(agent_id).profile,
                self._robot(agent_id).get_status(),
                self.tasks[task_id],
                self.world,
            )
            if not verdict.accept:
                return False
        return True

    def _plannable_tasks(self) -> list[TaskSpec]:
        return [
            t
            for t in self.tasks.values()
            if t.state in (TaskState.PENDING, TaskState.REASSIGNING)
        ]

    def _close_satisfied_tasks(self) -> None:
        for task in self.tasks.values():
            if task.terminal or task.state is not TaskState.PENDING:
                continue
            ok, _ = check_goal(self.world, task)
            if ok:
                task.advance(TaskState.DONE)
                self._group(
                    Sender.assistant(),
                    MessageKind.STATUS_UPDATE,
                    f"task {task.id} already satisfied",
                    data={"task": task.id, "agent": "-", "status": "done"},
                )

    def _plan_round(self) -> None:
        self._close_satisfied_tasks()
        plannable = self._plannable_tasks()
        idle = self._idle_agents()
        profiles = [self._robot(n).profile for n in idle]
        statuses = {n: self._robot(n).get_status() for n in idle}

        assignments: list[Assignment] = []
        result_unassignable: list[str] = []
        if plannable and profiles:
            assignments, result_unassignable = self._propose(
                plannable, profiles, statuses
            )
        elif plannable:
            result_unassignable = []  # nobody idle; wait for agents to free up

        for assignment in assignments:
            self._commit_assignment(assignment)

        # tasks with no feasible agent at all (busy agents included) go to
        # the human gate or fail; tasks feasible for a busy agent just wait
        for task_id in result_unassignable:
            if not self._feasible_for_anyone(task_id):
                self._handle_unassignable(task_id)

        if assignments:
            self.summary = summarize(self.log)
            self._emit("summary", self.summary.to_json())

        if self._finished():
            return
        self._set_phase(Phase.VERIFYING)

    def _propose(self, plannable, profiles, statuses):
        """Run the configured backend behind the validation point, falling
        back to the rule-based allocator after repeated violations."""
        roster = [p.name for p in profiles]
        if self.backend is not None:
            request = build_request(
                plannable, profiles, statuses, self.summary,
                self.exclusions, self.last_decision,
            )
            try:
                proposed = propose_validated(
                    self.backend, request, roster, plannable,
                    on_violation=lambda note: self._group(
                        Sender.assistant(), MessageKind.INFO,
                        f"backend proposal rejected: {note}",
                        data={"backend_violation": note},
                    ),
                )
                filtered = []
                used_agents: set[str] = set()
                for a in proposed:
                    if (
                        a.agent_id in statuses
                        and a.agent_id not in used_agents
                        and self._pair_allowed(a.task_id, a.agent_id)
                    ):
                        filtered.append(a)
                        used_agents.add(a.agent_id)
                unassigned = [
                    t.id
                    for t in plannable
                    if t.id not in {a.task_id for a in filtered}
                ]
                return filtered, unassigned
            except BackendViolation as exc:
                self._group(
                    Sender.assistant(), MessageKind.INFO,
                    f"backend abandoned, using rule-based allocator: {exc}",
                    data={"backend_violation": str(exc)},
                )
        result = allocate(
            plannable, profiles, statuses, self.summary, self.world,
            pair_allowed=self._pair_allowed,
        )
        return result.assignments, result.unassignable

    def _commit_assignment(self, assignment: Assignment, forced: bool = False) -> None:
        task = self.tasks[assignment.task_id]
        task.advance(TaskState.ASSIGNED)
        self.assignments[task.id] = assignment.agent_id
        if forced:
            self.forced.add(task.id)
        robot = self._robot(assignment.agent_id)
        robot.current_task = task.id
        robot.progress = task_progress(self.world, task)
        self._group(
            Sender.assistant(),
            MessageKind.TASK_ASSIGNMENT,
            format_assignment(assignment.agent_id, task.id),
            mentions=(assignment.agent_id,),
            data={"task": task.id, "agent": assignment.agent_id,
                  "rationale": assignment.rationale, "forced": forced},
        )

    def _feasible_for_anyone(self, task_id: str) -> bool:
        task = self.tasks[task_id]
        statuses = {n: self._robot(n).get_status() for n in self.world.robots}
        profiles = [self._robot(n).profile for n in sorted(self.world.robots)]
        result = allocate(
            [task], profiles, statuses, self.summary, self.world,
            pair_allowed=self._pair_allowed,
        )
        return bool(result.assignments)

    def _handle_unassignable(self, task_id: str) -> None:
        """Reallocation impasse: no allowed feasible pairing remains.

        With the human gate enabled, the least-bad candidate (rejecting
        agents included) is put to the supervisor; 'yes' forces the
        assignment, 'no' removes the candidate and the next planning round
        escalates the next one. Unattended modes mark the task failed.
        """
        task = self.tasks[task_id]
        if task.terminal:
            return
        if self.config.mode.human_gate:
            candidate = self._gate_candidate(task_id)
            best_overall = self._gate_candidate(task_id, include_busy=True)
            if candidate is not None and candidate == best_overall:
                decision = self._request_human_gate(
                    task_id,
                    candidate,
                    f"no agreed agent for {task_id}; "
                    f"force assignment to {candidate}?",
                )
                if decision == "yes":
                    self._commit_assignment(
                        Assignment(task_id, candidate, rationale="human override"),
                        forced=True,
                    )
                    return
                self.exclusions.append((task_id, candidate, "human_no"))
            if self._gate_candidate(task_id, include_busy=True) is not None:
                return  # gate the next candidate once it is idle
        self._fail_task(task, "no feasible agent")

    def _gate_candidate(
        self, task_id: str, include_busy: bool = False
    ) -> Optional[str]:
        """Least-bad agent to put before the supervisor: fewest missing
        capability tags, then cheapest optimistic estimate, then name.
        Verify-rejected pairs stay eligible (the disagreement is the
        point); vetoed, burned, and stalled pairs do not. Gates fire only
        for idle candidates; ``include_busy`` widens the scan so the
        session can wait for a busy candidate instead of failing."""
        task = self.tasks[task_id]
        hard_blocked = {
            (t, a)
            for t, a, reason in self.exclusions
            if reason in ("human_no", "exec_failed", "stalled")
        }
        if include_busy:
            pool = [
                n
                for n in sorted(self.world.robots)
                if self._robot(n).fault is None
            ]
        else:
            pool = self._idle_agents()
        ranked = []
        for name in pool:
            if (task_id, name) in hard_blocked:
                continue
            robot = self._robot(name)
            try:
                program = compile_program(
                    robot.profile, robot.position, task, self.world, optimistic=True
                )
            except ProgramInfeasible:
                continue
            if not program.actions:
                continue  # this agent cannot move the goal at all
            missing = len(frozenset(task.required_capabilities) - robot.profile.capabilities)
            ranked.append((missing, program.ticks, program.energy, name))
        if not ranked:
            return None
        return min(ranked)[3]

    def _fail_task(self, task: TaskSpec, reason: str) -> None:
        agent = self.assignments.pop(task.id, None)
        self.programs.pop(task.id, None)
        if agent is not None:
            robot = self._robot(agent)
            if robot.current_task == task.id:
                robot.current_task = None
                robot.progress = 0.0
                robot.plan = None
                if robot.carrying is not None:
                    obj = self.world.objects[robot.carrying]
                    obj.carried_by = None
                    obj.x, obj.y = robot.x, robot.y
                    obj.level = robot.elevation_level
                    robot.carrying = None
        task.advance(TaskState.FAILED)
        self._group(
            Sender.assistant(),
            MessageKind.STATUS_UPDATE,
            f"task {task.id} failed: {reason}",
            data={"task": task.id, "agent": agent or "-",
                  "status": "failed", "reason": reason},
        )

    # -- verification -----------------------------------------------------

    def _newly_assigned(self) -> list[tuple[str, str]]:
        pairs = [
            (task_id, agent)
            for task_id, agent in self.assignments.items()
            if self.tasks[task_id].state is TaskState.ASSIGNED
        ]
        return sorted(pairs, key=lambda p: (p[1], p[0]))  # agent-id order

    def _verify_round(self) -> None:
        rejected_any = False
        for task_id, agent in self._newly_assigned():
            task = self.tasks[task_id]
            robot = self._robot(agent)
            if not self.config.mode.verification:
                task.advance(TaskState.EXECUTING)
                self._start_execution(task, agent)
                continue
            if task_id in self.forced:
                # the robot complies with the supervisor's override
                self._group(
                    Sender.robot(agent),
                    MessageKind.VERIFICATION_VERDICT,
                    f"verdict on {task_id}: accept (supervisor override)",
                    data={"task": task_id, "agent": agent, "verdict": "accept",
                          "reason": "supervisor override"},
                )
                task.advance(TaskState.VERIFIED)
                task.advance(TaskState.EXECUTING)
                self._start_execution(task, agent)
                continue
            verdict = verify(robot.profile, robot.get_status(), task, self.world)
            self._group(
                Sender.robot(agent),
                MessageKind.VERIFICATION_VERDICT,
                (
                    f"verdict on {task_id}: accept"
                    if verdict.accept
                    else f"verdict on {task_id}: reject ({verdict.reason})"
                ),
                data={
                    "task": task_id,
                    "agent": agent,
                    "verdict": "accept" if verdict.accept else "reject",
                    "reason": verdict.reason,
                },
            )
            if verdict.accept:
                task.advance(TaskState.VERIFIED)
                task.advance(TaskState.EXECUTING)
                self._start_execution(task, agent)
                continue
            # allocator and verifier disagree: back to reallocation; the
            # human is pulled in only if reallocation reaches an impasse
            rejected_any = True
            reason_code = verdict.reason.split(":")[0].replace(" ", "_")
            self.exclusions.append((task_id, agent, reason_code))
            self._unassign(task_id, agent)
        if self._finished():
            return
        if rejected_any:
            self._status_refresh_round()
            self._set_phase(Phase.REALLOCATING)
        else:
            self._set_phase(Phase.EXECUTING)

    def _unassign(self, task_id: str, agent: str) -> None:
        task = self.tasks[task_id]
        if task.state in (TaskState.ASSIGNED, TaskState.EXECUTING):
            task.advance(TaskState.REASSIGNING)
        self.assignments.pop(task_id, None)
        self.programs.pop(task_id, None)
        robot = self._robot(agent)
        if robot.current_task == task_id:
            robot.current_task = None
            robot.progress = 0.0
            robot.plan = None
            if robot.carrying is not None:
                # abandon the attempt: set the item down where we stand so
                # the next assignee can pick it up
                obj = self.world.objects[robot.carrying]
                obj.carried_by = None
                obj.x, obj.y = robot.x, robot.y
                obj.level = robot.elevation_level
                robot.carrying = None

    def _start_execution(self, task: TaskSpec, agent: str) -> None:
        robot = self._robot(agent)
        program = compile_program(
            robot.profile, robot.position, task, self.world, optimistic=True
        )
        self.programs[task.id] = deque(program.actions)
        self._group(
            Sender.robot(agent),
            MessageKind.STATUS_UPDATE,
            f"executing {task.id}",
            data={"task": task.id, "agent": agent, "status": "executing"},
        )

    # -- the human gate ---------------------------------------------------

    def _ground_truth_feasible(self, task_id: str, agent_id: str) -> bool:
        """Simulate the contested assignment on a scratch copy of the
        world: can this agent actually finish the task from here?"""
        task = self.tasks[task_id]
        try:
            program = compile_program(
                self._robot(agent_id).profile,
                self._robot(agent_id).position,
                task,
                self.world,
                optimistic=False,
            )
        except ProgramInfeasible:
            return False
        ghost = copy.deepcopy(self.world)
        robot = ghost.robots[agent_id]
        for action in program.actions:
            failures = ghost.tick({agent_id: action})
            while robot.busy:
                failures += ghost.tick({})
            if any(
                m.kind is MessageKind.EXCEPTION
                and m.data
                and m.data.get("agent") == agent_id
                and m.data.get("kind") in INFEASIBLE_CODES
                for m in failures
            ):
                return False
        ok, _ = check_goal(ghost, task)
        return ok

    def _request_human_gate(self, task_id: str, agent_id: str, question: str) -> str:
        """Ask the supervisor to arbitrate one contested assignment.

        Planning blocks on the reply (simulation may keep ticking under an
        interactive decider); the reply is one yes/no, logged and counted
        as a step.
        """
        context = self.summary.digest or "no unresolved exceptions"
        self._group(
            Sender.assistant(),
            MessageKind.INFO,
            f"decision needed: {question}",
            data={"gate": {"task": task_id, "agent": agent_id, "question": question,
                           "context": context}},
        )
        self._emit(
            "decision_request",
            {"task": task_id, "agent": agent_id, "question": question,
             "context": context},
        )
        if isinstance(self.decider, OracleDecider):
            self.decider.pending_pair = (task_id, agent_id)
        decision = self.decider.decide(question, context)
        decision = "yes" if decision == "yes" else "no"
        self.last_decision = decision
        self.decisions += 1
        self.step_count += 1  # the human reply counts as an execution step
        self._group(
            Sender.human(),
            MessageKind.HUMAN_DECISION,
            decision,
            data={"task": task_id, "agent": agent_id, "decision": decision},
        )
        return decision

    # -- execution --------------------------------------------------------

    def _status_refresh_round(self) -> None:
        """One StatusUpdate per roster agent, in name order; reallocation
        never starts without this complete round. Latched faults are
        cleared here (the orchestrator has now seen them)."""
        for name in sorted(self.world.robots):
            robot = self._robot(name)
            status = robot.get_status()
            self._group(
                Sender.robot(name),
                MessageKind.STATUS_UPDATE,
                f"status: battery {status.battery_pct:.1f}%, "
                f"position {status.position}, task {status.current_task or '-'}",
                data={
                    "agent": name,
                    "task": status.current_task,
                    "status": "status_report",
                    "battery_pct": round(status.battery_pct, 3),
                    "position": list(status.position),
                    "progress": round(status.progress, 3),
                    "health": "ok" if status.fault is None else status.fault,
                },
            )
        for name in sorted(self.world.robots):
            self._robot(name).fault = None

    def _dispatch_actions(self) -> dict[str, ActionCommand]:
        actions: dict[str, ActionCommand] = {}
        for name in sorted(self.world.robots):
            robot = self._robot(name)
            if robot.fault is not None or robot.busy:
                continue
            if self.human_queues[name]:
                actions[name] = self.human_queues[name].popleft()
                continue
            task_id = robot.current_task
            if task_id and self.programs.get(task_id):
                actions[name] = self.programs[task_id].popleft()
        for name, action in sorted(actions.items()):
            self.step_count += 1
            self.dispatched_actions += 1
            self._group(
                Sender.robot(name),
                MessageKind.INFO,
                f"dispatch {action.op}",
                data={"dispatch": {**action.to_json(), "agent": name,
                                   "task": self._robot(name).current_task}},
            )
        return actions

    def _execute_until_event(self) -> None:
        """Tick until an exception interrupts, new planning is needed, the
        goals close out, or the budget runs dry."""
        while True:
            self._process_commands()
            if self._finished():
                return
            if self.world.tick_count >= self.max_ticks:
                for task in self.tasks.values():
                    if not task.terminal:
                        self._fail_task(task, "tick budget exhausted")
                self._finished()
                return
            actions = self._dispatch_actions()
            emitted = self.world.tick(actions, schedule=self._live_schedule())
            exception_agent_kinds = set()
            for msg in emitted:
                self._append(msg)
                if msg.kind is MessageKind.EXCEPTION and msg.data:
                    exception_agent_kinds.add(
                        (msg.data["agent"], msg.data.get("kind"))
                    )
            self.world_hashes.append(self.world.state_hash())
            for (agent, kind), action in (
                ((a, k), actions.get(a))
                for (a, k) in sorted(exception_agent_kinds)
            ):
                if action is not None and kind in INFEASIBLE_CODES:
                    self.infeasible_dispatches += 1
            self._update_progress()
            need_replan = self._absorb_exceptions(exception_agent_kinds)
            need_replan = self._detect_stalls() or need_replan
            if self._finished():
                return
            if need_replan or self._idle_work_available():
                self._status_refresh_round()
                self._set_phase(Phase.REALLOCATING)
                return

    def _live_schedule(self) -> tuple:
        return self.scenario.exception_schedule

    def _update_progress(self) -> None:
        for task_id, agent in sorted(self.assignments.items()):
            task = self.tasks[task_id]
            if task.state is not TaskState.EXECUTING:
                continue
            robot = self._robot(agent)
            robot.progress = task_progress(self.world, task)
            ok, _ = check_goal(self.world, task)
            if ok:
                task.advance(TaskState.DONE)
                self.assignments.pop(task_id)
                self.programs.pop(task_id, None)
                robot.current_task = None
                robot.progress = 0.0
                self._group(
                    Sender.robot(agent),
                    MessageKind.STATUS_UPDATE,
                    f"completed {task_id}",
                    data={"task": task_id, "agent": agent, "status": "done"},
                )

    def _absorb_exceptions(self, agent_kinds: set[tuple[str, str]]) -> bool:
        """Exception messages pull the affected robot's task back into
        reallocation; the failed pairing is never retried."""
        replan = False
        for agent, kind in sorted(agent_kinds):
            robot = self._robot(agent)
            task_id = robot.current_task
            if task_id is None or self.tasks[task_id].terminal:
                replan = replan or robot.fault is not None
                continue
            self.exclusions.append((task_id, agent, "exec_failed"))
            self._unassign(task_id, agent)
            replan = True
        return replan

    def _detect_stalls(self) -> bool:
        """A robot that exhausted its program without reaching the goal
        signals an exception instead of idling forever."""
        replan = False
        for task_id, agent in sorted(self.assignments.items()):
            task = self.tasks[task_id]
            robot = self._robot(agent)
            if (
                task.state is TaskState.EXECUTING
                and not robot.busy
                and robot.fault is None
                and not self.human_queues[agent]
                and not self.programs.get(task_id)
            ):
                self._group(
                    Sender.robot(agent),
                    MessageKind.EXCEPTION,
                    f"exception no_progress: finished actions but {task_id} unmet",
                    data={"agent": agent, "task": task_id, "kind": "no_progress",
                          "detail": "program exhausted, goal unmet"},
                )
                self.exclusions.append((task_id, agent, "stalled"))
                self._unassign(task_id, agent)
                replan = True
        return replan

    def _idle_work_available(self) -> bool:
        plannable = self._plannable_tasks()
        if not plannable:
            return False
        idle = self._idle_agents()
        if not idle:
            return False
        profiles = [self._robot(n).profile for n in idle]
        statuses = {n: self._robot(n).get_status() for n in idle}
        result = allocate(
            plannable, profiles, statuses, self.summary, self.world,
            pair_allowed=self._pair_allowed,
        )
        if result.assignments:
            return True
        # tasks with no feasible agent at all still need a planning round,
        # where they are gated (full mode) or failed, so the run terminates
        return any(not self._feasible_for_anyone(t.id) for t in plannable)

    def _idle_tick(self) -> None:
        """Gate waits block planning, not execution: in-flight movement
        keeps ticking; with every robot idle, simulated time waits with
        the human."""
        self._process_commands()
        if self.world.tick_count >= self.max_ticks:
            return
        if not any(r.busy for r in self.world.robots.values()):
            return
        emitted = self.world.tick({}, schedule=self._live_schedule())
        for msg in emitted:
            self._append(msg)
        self.world_hashes.append(self.world.state_hash())

    def _finished(self) -> bool:
        if not self.live:
            return True
        if all(t.terminal for t in self.tasks.values()):
            success = all(t.state is TaskState.DONE for t in self.tasks.values())
            self._set_phase(Phase.COMPLETED if success else Phase.FAILED)
            self._emit("report", self.report().to_json())
            return True
        return False

    # -- human commands ---------------------------------------------------

    _ACTION_VERBS = {
        "climb_up": lambda args: ActionCommand.climb_up(),
        "climb_down": lambda args: ActionCommand.climb_down(),
        "jump": lambda args: ActionCommand.jump_upward(),
        "jump_upward": lambda args: ActionCommand.jump_upward(),
        "wait": lambda args: ActionCommand.wait(),
        "move_to": lambda args: ActionCommand.move_to(int(args[0]), int(args[1])),
        "grasp": lambda args: ActionCommand.grasp(args[0]),
    }

    def human_command(self, text: str, channel: Channel = Channel.GROUP) -> list[int]:
        """Route one human instruction; returns the ack message seqs.

        Group commands reach mentioned agents (broadcast reaches all);
        direct commands stay confidential to their target.
        """
        if not self.live:
            raise SessionClosed(f"session is {self.phase.value}")
        if self.config.decision_policy not in ("interactive", "scripted"):
            raise ConfigError(
                "human commands need an interactive or scripted session"
            )
        mentions, payload = parse_mentions(text)
        targets: list[str]
        if channel.is_direct:
            if channel.target not in self.roster:
                raise UnknownAgent(f"unknown agent {channel.target!r}")
            targets = [channel.target]
        else:
            for mention in mentions:
                if mention != BROADCAST and mention not in self.roster:
                    raise UnknownAgent(f"unknown agent {mention!r}")
            targets = (
                sorted(self.roster)
                if BROADCAST in mentions
                else [m for m in mentions if m in self.roster]
            )
        self._append(
            ChatMessage(
                sender=Sender.human(),
                channel=channel,
                kind=MessageKind.HUMAN_COMMAND,
                body=text,
                mentions=tuple(mentions),
                tick=self.world.tick_count,
            )
        )
        acks = []
        for name in targets:
            acks.append(self._interpret_command(name, payload, channel))
        return acks

    def _interpret_command(self, agent: str, payload: str, channel: Channel) -> int:
        robot = self._robot(agent)
        tokens = payload.split()
        verb = tokens[0].lower() if tokens else ""
        if verb == "stop":
            robot.plan = None
            self.human_queues[agent].clear()
            if robot.current_task:
                self.programs.pop(robot.current_task, None)
            status = robot.get_status()
            body = f"{agent}: stopping"
            if "report" in payload.lower():
                body += (
                    f"; battery {status.battery_pct:.1f}%, at {status.position}, "
                    f"task {status.current_task or '-'}"
                )
        elif verb in ("status", "report"):
            status = robot.get_status()
            body = (
                f"{agent}: battery {status.battery_pct:.1f}%, at {status.position}, "
                f"task {status.current_task or '-'} ({status.progress:.0%})"
            )
        elif verb in self._ACTION_VERBS:
            try:
                action = self._ACTION_VERBS[verb](tokens[1:])
                self.human_queues[agent].append(action)
                body = f"{agent}: queued {verb}"
            except (ValueError, IndexError):
                body = f"{agent}: cannot parse arguments for {verb}"
        else:
            body = f"{agent}: acknowledged"
        return self._append(
            ChatMessage(
                sender=Sender.robot(agent),
                channel=channel,
                kind=MessageKind.INFO,
                body=body,
                tick=self.world.tick_count,
            )
        )

    def submit_decision(self, decision: str) -> None:
        """Feed an interactive gate from outside (gateway clients)."""
        if not isinstance(self.decider, InteractiveDecider):
            raise ConfigError("session does not take interactive decisions")
        self.decider.submit(decision)

    # -- reporting --------------------------------------------------------

    def report(self) -> SessionReport:
        outcome = {
            t.id: ("done" if t.state is TaskState.DONE else "failed")
            for t in self.tasks.values()
        }
        return SessionReport(
            scenario=self.scenario.name,
            scenario_hash=self.scenario.content_hash(),
            mode=self.config.mode.value,
            seed=self.config.seed,
            outcome=outcome,
            step_count=self.step_count,
            tick_count=self.world.tick_count,
            dispatched_actions=self.dispatched_actions,
            decisions=self.decisions,
            infeasible_dispatches=self.infeasible_dispatches,
            log_records=[m.to_json() for m in self.log],
            world_hashes=list(self.world_hashes),
        )

    # -- checkpointing ------------------------------------------------------

    def checkpoint(self) -> dict:
        """Verifiable snapshot at a phase boundary; resuming reproduces the
        exact future of an unbroken run."""
        payload = {
            "format": CHECKPOINT_FORMAT,
            "config": self.config.to_json(),
            "scenario": self.scenario.to_json(),
            "scenario_hash": self.scenario.content_hash(),
            "phase": self.phase.value,
            "step_count": self.step_count,
            "dispatched_actions": self.dispatched_actions,
            "decisions": self.decisions,
            "infeasible_dispatches": self.infeasible_dispatches,
            "world": self.world.runtime_json(),
            "tasks": {tid: t.to_json() for tid, t in sorted(self.tasks.items())},
            "task_order": self.task_order,
            "assignments": dict(sorted(self.assignments.items())),
            "forced": sorted(self.forced),
            "programs": {
                tid: [a.to_json() for a in acts]
                for tid, acts in sorted(self.programs.items())
            },
            "human_queues": {
                n: [a.to_json() for a in q]
                for n, q in sorted(self.human_queues.items())
            },
            "exclusions": [list(e) for e in self.exclusions],
            "agent_contexts": {k: list(v) for k, v in sorted(self.agent_contexts.items())},
            "log": [m.to_json() for m in self.log],
            "summary": self.summary.to_json(),
            "kb": self.kb.to_json(),
            "world_hashes": list(self.world_hashes),
            "last_decision": self.last_decision,
            "decision_cursor": (
                self.decider.cursor if isinstance(self.decider, ScriptedDecider) else 0
            ),
            "backend_cursor": (
                self.backend.cursor if isinstance(self.backend, RecordedBackend) else 0
            ),
        }
        digest = hashlib.sha256(
            json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()
        return {**payload, "integrity": digest}

    @staticmethod
    def resume(checkpoint: dict,
               event_sink: Optional[Callable[[str, dict], None]] = None) -> "Session":
        if not isinstance(checkpoint, dict) or checkpoint.get("format") != CHECKPOINT_FORMAT:
            raise CorruptCheckpoint("not a checkpoint payload")
        payload = {k: v for k, v in checkpoint.items() if k != "integrity"}
        digest = hashlib.sha256(
            json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()
        if digest != checkpoint.get("integrity"):
            raise CorruptCheckpoint("integrity hash mismatch")
        from .world import parse_scenario

        scenario = parse_scenario(checkpoint["scenario"])
        config = SessionConfig.from_json(checkpoint["config"])
        session = Session(config, scenario, event_sink=event_sink)
        session.phase = Phase(checkpoint["phase"])
        session.step_count = checkpoint["step_count"]
        session.dispatched_actions = checkpoint["dispatched_actions"]
        session.decisions = checkpoint["decisions"]
        session.infeasible_dispatches = checkpoint["infeasible_dispatches"]
        session.world = World.from_runtime_json(
            checkpoint["world"], scenario.profiles
        )
        session.task_order = checkpoint["task_order"]
        # rebuild in scenario order: task iteration order is observable
        session.tasks = {
            tid: TaskSpec.from_json(checkpoint["tasks"][tid])
            for tid in session.task_order
        }
        session.assignments = dict(checkpoint["assignments"])
        session.forced = set(checkpoint["forced"])
        session.programs = {
            tid: deque(ActionCommand.from_json(a) for a in acts)
            for tid, acts in checkpoint["programs"].items()
        }
        session.human_queues = {
            n: deque(ActionCommand.from_json(a) for a in q)
            for n, q in checkpoint["human_queues"].items()
        }
        session.exclusions = [tuple(e) for e in checkpoint["exclusions"]]
        session.agent_contexts = {
            k: list(v) for k, v in checkpoint["agent_contexts"].items()
        }
        log = MessageLog()
        for record in checkpoint["log"]:
            log._entries.append(ChatMessage.from_json(record))
        session.log = log
        # planning context restores from the stored summary, not the log
        session.summary = SessionSummary.from_json(checkpoint["summary"])
        session.kb = KnowledgeBase.from_json(checkpoint["kb"])
        session.world_hashes = list(checkpoint["world_hashes"])
        session.last_decision = checkpoint["last_decision"]
        if isinstance(session.decider, ScriptedDecider):
            session.decider.cursor = checkpoint["decision_cursor"]
        if isinstance(session.backend, RecordedBackend):
            session.backend.cursor = checkpoint["backend_cursor"]
        return session


def start_session(
    config: SessionConfig,
    scenario: Scenario,
    event_sink: Optional[Callable[[str, dict], None]] = None,
) -> Session:
    """Create a session and run Step 1 (input aggregation)."""
    session = Session(config, scenario, event_sink=event_sink)
    session.start()
    return session
