"""Exception hierarchy shared across the package."""

from __future__ import annotations


class FleetError(Exception):
    """Base class for all fleetops errors."""


# --- messaging ---

class MalformedMention(FleetError):
    """An '@' sigil in the leading mention run has no token after it."""


class MalformedAssignment(FleetError):
    """A task-assignment body does not follow the assignment grammar."""


class UnknownAgent(FleetError):
    """A mention or command names an agent outside the roster."""


# --- world / scenarios ---

class UnknownPredicate(FleetError):
    """A goal predicate token is not recognized."""


class ScenarioParseError(FleetError):
    """Scenario file could not be parsed.

    Carries best-effort line/field diagnostics in the message.
    """


class ScenarioValidationError(FleetError):
    """Scenario parsed but violates invariants; lists all violations."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SearchBudgetExceeded(FleetError):
    """Joint-state search exceeded its node budget."""


# --- robot actions ---

class ActionInfeasible(FleetError):
    """An action command cannot be started; callers must emit an
    exception chat message for every instance of this error."""

    code = "infeasible_action"

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class Unreachable(ActionInfeasible):
    code = "unreachable"


class BatteryInsufficient(ActionInfeasible):
    code = "battery_insufficient"


class InfeasibleAction(ActionInfeasible):
    code = "infeasible_action"


class NoActiveTask(FleetError):
    """Progress queried on a robot with no current task."""


# --- knowledge base ---

class EmptyDocument(FleetError):
    """Manual ingestion was handed an empty document."""


class EmptyKnowledgeBase(FleetError):
    """Retrieval attempted against an agent with no ingested documents."""


class BinaryDocument(FleetError):
    """Manual ingestion only accepts plain text / Markdown."""


# --- planner / session ---

class BackendViolation(FleetError):
    """Planner backend kept emitting invalid proposals after retries."""


class DecisionTimeout(FleetError):
    """No human decision arrived within the configured timeout."""


class ConfigError(FleetError):
    """Invalid session configuration or mode/backend combination."""


class SessionClosed(FleetError):
    """Command sent to a session that already completed or failed."""


class CorruptCheckpoint(FleetError):
    """Checkpoint payload failed its integrity check."""


# --- bench / gateway ---

class UnsupportedFormat(FleetError):
    """Report emission asked for an unknown output format."""


class IncomparableSuites(FleetError):
    """Ablation comparison over suites with mismatched scenarios/seeds."""


class BindFailure(FleetError):
    """Gateway could not bind its listen address."""
