"""Typed chat messages, channels, @-mention routing, and the session log.

All coordination in a session flows through ``ChatMessage`` records on a
single append-only ``MessageLog``. Group messages are visible to every
agent but enter only the mentioned agents' processing contexts; direct
messages reach exactly one target. ``summarize`` compresses the log into
the (task, agent, status) history that planners use instead of the raw
transcript.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional

from .errors import MalformedAssignment, MalformedMention, UnknownAgent

# Broadcast marker: '@all' in a message body addresses every agent.
BROADCAST = "@all"

# Reserved tokens that can never be roster agent names.
RESERVED_NAMES = frozenset({"all", "assistant", "human"})

_AGENT_NAME_RE = re.compile(r"^[^\s@]{1,64}$")


def valid_agent_name(name: str) -> bool:
    """Agent names are single tokens, 1-64 chars, no whitespace or '@'."""
    return bool(_AGENT_NAME_RE.match(name)) and name.lower() not in RESERVED_NAMES


class SenderRole(str, Enum):
    HUMAN = "human"
    ASSISTANT = "assistant"
    ROBOT = "robot"


@dataclass(frozen=True)
class Sender:
    role: SenderRole
    name: Optional[str] = None  # set only for robots

    @staticmethod
    def human() -> "Sender":
        return Sender(SenderRole.HUMAN)

    @staticmethod
    def assistant() -> "Sender":
        return Sender(SenderRole.ASSISTANT)

    @staticmethod
    def robot(name: str) -> "Sender":
        return Sender(SenderRole.ROBOT, name)

    def to_json(self) -> dict:
        return {"role": self.role.value, "name": self.name}

    @staticmethod
    def from_json(data: dict) -> "Sender":
        return Sender(SenderRole(data["role"]), data.get("name"))


@dataclass(frozen=True)
class Channel:
    """Group channel, or a direct channel with exactly one target agent."""

    kind: str  # "group" | "direct"
    target: Optional[str] = None
    opened_by: Optional[str] = None  # "human" | "assistant", direct only

    @staticmethod
    def direct(target: str, opened_by: str = "human") -> "Channel":
        return Channel("direct", target, opened_by)

    @property
    def is_direct(self) -> bool:
        return self.kind == "direct"

    def to_json(self) -> dict:
        return {"kind": self.kind, "target": self.target, "opened_by": self.opened_by}

    @staticmethod
    def from_json(data: dict) -> "Channel":
        return Channel(data["kind"], data.get("target"), data.get("opened_by"))


Channel.GROUP = Channel("group")


class MessageKind(str, Enum):
    TASK_ASSIGNMENT = "task_assignment"
    VERIFICATION_VERDICT = "verification_verdict"
    EXCEPTION = "exception"
    STATUS_UPDATE = "status_update"
    HUMAN_COMMAND = "human_command"
    HUMAN_DECISION = "human_decision"
    INFO = "info"


@dataclass(frozen=True)
class ChatMessage:
    """One immutable chat record.

    ``seq`` is 0 until the message is appended to a log, which assigns the
    next sequence number. ``data`` carries the machine-readable payload
    backing the structured kinds (task/agent/status fields); free text
    lives in ``body`` only.
    """

    sender: Sender
    channel: Channel
    kind: MessageKind
    body: str
    mentions: tuple[str, ...] = ()
    tick: int = 0
    seq: int = 0
    attachment: Optional[str] = None
    data: Optional[dict] = None

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "tick": self.tick,
            "sender": self.sender.to_json(),
            "channel": self.channel.to_json(),
            "mentions": list(self.mentions),
            "kind": self.kind.value,
            "body": self.body,
            "attachment": self.attachment,
            "data": self.data,
        }

    @staticmethod
    def from_json(data: dict) -> "ChatMessage":
        return ChatMessage(
            sender=Sender.from_json(data["sender"]),
            channel=Channel.from_json(data["channel"]),
            kind=MessageKind(data["kind"]),
            body=data["body"],
            mentions=tuple(data.get("mentions") or ()),
            tick=data.get("tick", 0),
            seq=data.get("seq", 0),
            attachment=data.get("attachment"),
            data=data.get("data"),
        )


def parse_mentions(body: str) -> tuple[list[str], str]:
    """Split a message body into its leading mention run and payload.

    Only whitespace-separated '@token' words at the very start of the body
    are mentions; an '@' later in the text is literal. '@all' maps to the
    BROADCAST marker. Duplicate mentions are dropped, keeping first
    occurrence. A trailing 'EOF' terminator token is stripped from the
    payload.

    Raises MalformedMention when a bare '@' (sigil with no token) appears
    in the leading run.
    """
    pos = 0
    n = len(body)
    mentions: list[str] = []
    seen: set[str] = set()
    while True:
        while pos < n and body[pos].isspace():
            pos += 1
        if pos >= n or body[pos] != "@":
            break
        end = pos + 1
        while end < n and not body[end].isspace():
            end += 1
        token = body[pos + 1 : end]
        if not token:
            raise MalformedMention(
                f"'@' at offset {pos} is not followed by an agent name"
            )
        mention = BROADCAST if token == "all" else token
        if mention not in seen:
            seen.add(mention)
            mentions.append(mention)
        pos = end
    payload = body[pos:].strip()
    payload = re.sub(r"(?:(?<=\s)|^)EOF\s*$", "", payload).rstrip()
    return mentions, payload


# Backend wire format for assignments; the UI renders the friendly
# "<agent> has been assigned <task>" line instead.
_ASSIGNMENT_RE = re.compile(r"^Your task is (?P<task>[^\s.]+)\.?$")


def format_assignment(agent: str, task: str) -> str:
    return f"@{agent} Your task is {task}. EOF"


def parse_assignment(body: str) -> tuple[str, str]:
    """Parse an assignment body into (agent, task).

    Raises MalformedAssignment unless the body is exactly one mention
    followed by the assignment sentence.
    """
    try:
        mentions, payload = parse_mentions(body)
    except MalformedMention as exc:
        raise MalformedAssignment(str(exc)) from exc
    if len(mentions) != 1 or mentions[0] == BROADCAST:
        raise MalformedAssignment(f"expected exactly one agent mention: {body!r}")
    match = _ASSIGNMENT_RE.match(payload)
    if not match:
        raise MalformedAssignment(f"body does not match assignment grammar: {body!r}")
    return mentions[0], match.group("task")


@dataclass(frozen=True)
class DeliveryPlan:
    """Who sees a message (display) and whose processing context it enters.

    Sets cover roster robot agents only; ``assistant_sees`` records whether
    the assistant's context includes the message (always true for group
    traffic, never for a direct human-robot chat).
    """

    display_set: frozenset[str]
    context_set: frozenset[str]
    assistant_sees: bool


def route(msg: ChatMessage, roster: Iterable[str]) -> DeliveryPlan:
    """Compute the delivery plan for one message against a roster.

    Group messages are displayed to all agents but enter only mentioned
    agents' contexts (broadcast reaches everyone). Direct messages are
    confined to their single target in both sets.
    """
    roster_set = frozenset(roster)
    if msg.channel.is_direct:
        target = msg.channel.target
        if target == "assistant":
            return DeliveryPlan(frozenset(), frozenset(), True)
        if target not in roster_set:
            raise UnknownAgent(f"direct target {target!r} not in roster")
        only = frozenset({target})
        return DeliveryPlan(only, only, False)

    context: set[str] = set()
    for mention in msg.mentions:
        if mention == BROADCAST:
            context |= roster_set
            continue
        if mention not in roster_set:
            raise UnknownAgent(f"mention {mention!r} not in roster")
        context.add(mention)
    return DeliveryPlan(roster_set, frozenset(context), True)


class MessageLog:
    """Append-only, strictly sequenced message store."""

    def __init__(self) -> None:
        self._entries: list[ChatMessage] = []

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    @property
    def entries(self) -> tuple[ChatMessage, ...]:
        return tuple(self._entries)

    @property
    def max_seq(self) -> int:
        return self._entries[-1].seq if self._entries else 0

    def append(self, msg: ChatMessage) -> int:
        """Store ``msg`` with the next sequence number and return it."""
        if msg.seq != 0:
            raise ValueError(f"message already sequenced (seq={msg.seq})")
        if msg.kind is MessageKind.TASK_ASSIGNMENT:
            parse_assignment(msg.body)  # invariant: grammar conformance
        seq = self.max_seq + 1
        self._entries.append(replace(msg, seq=seq))
        return seq

    def to_jsonl(self) -> str:
        """Serialize one message per line; replayable byte-for-byte."""
        return "".join(
            json.dumps(m.to_json(), sort_keys=True, separators=(",", ":")) + "\n"
            for m in self._entries
        )

    @staticmethod
    def from_jsonl(text: str) -> "MessageLog":
        log = MessageLog()
        for line in text.splitlines():
            if not line.strip():
                continue
            msg = ChatMessage.from_json(json.loads(line))
            log._entries.append(msg)
        return log


@dataclass
class SessionSummary:
    """Compressed (task, agent, status) history extracted from the log.

    This is the only planning context carried across reallocations and
    checkpoint gaps; raw transcripts never feed the planner.
    """

    assignments: list[tuple[str, str, str]] = field(default_factory=list)
    digest: str = ""
    as_of_seq: int = 0

    def to_json(self) -> dict:
        return {
            "assignments": [list(a) for a in self.assignments],
            "digest": self.digest,
            "as_of_seq": self.as_of_seq,
        }

    @staticmethod
    def from_json(data: dict) -> "SessionSummary":
        return SessionSummary(
            assignments=[tuple(a) for a in data.get("assignments", [])],
            digest=data.get("digest", ""),
            as_of_seq=data.get("as_of_seq", 0),
        )


def summarize(log: MessageLog) -> SessionSummary:
    """Extract the task history from structured records only.

    Assignment, verdict, and status-update messages drive the summary;
    free-text bodies of other kinds are never inspected. For each task the
    latest lifecycle status wins. The digest lists unresolved exceptions.
    """
    latest: dict[str, tuple[str, str]] = {}  # task -> (agent, status)
    order: list[str] = []
    exceptions: list[ChatMessage] = []

    def record(task: str, agent: str, status: str) -> None:
        if task not in latest:
            order.append(task)
        latest[task] = (agent, status)

    for msg in log:
        if msg.kind is MessageKind.TASK_ASSIGNMENT:
            agent, task = parse_assignment(msg.body)
            record(task, agent, "assigned")
        elif msg.kind is MessageKind.VERIFICATION_VERDICT:
            data = msg.data or {}
            task, agent = data.get("task"), data.get("agent")
            if task and agent:
                status = "verified" if data.get("verdict") == "accept" else "reassigning"
                record(task, agent, status)
        elif msg.kind is MessageKind.STATUS_UPDATE:
            data = msg.data or {}
            task, agent, status = data.get("task"), data.get("agent"), data.get("status")
            if task and agent and status:
                record(task, agent, status)
        elif msg.kind is MessageKind.EXCEPTION:
            exceptions.append(msg)

    unresolved: list[str] = []
    for exc in exceptions:
        data = exc.data or {}
        agent = data.get("agent", "?")
        task = data.get("task")
        kind = data.get("kind", "exception")
        resolved = False
        for msg in log:
            if msg.seq <= exc.seq:
                continue
            if task and msg.kind is MessageKind.TASK_ASSIGNMENT:
                _, assigned_task = parse_assignment(msg.body)
                if assigned_task == task:
                    resolved = True
                    break
            if not task and msg.kind is MessageKind.STATUS_UPDATE:
                mdata = msg.data or {}
                if mdata.get("agent") == agent and mdata.get("health") == "ok":
                    resolved = True
                    break
        if not resolved:
            unresolved.append(f"{agent}:{kind}" + (f"({task})" if task else ""))

    digest = (
        "unresolved exceptions: " + ", ".join(unresolved)
        if unresolved
        else "no unresolved exceptions"
    )
    return SessionSummary(
        assignments=[(t, latest[t][0], latest[t][1]) for t in order],
        digest=digest,
        as_of_seq=log.max_seq,
    )
