"""Orchestrator workflow: phases, gates, reallocation, checkpointing."""

import json
import random

import pytest

from fleetops.errors import ConfigError, CorruptCheckpoint, SessionClosed, UnknownAgent
from fleetops.messaging import Channel, MessageKind
from fleetops.session import (
    Phase,
    Session,
    SessionConfig,
    SessionMode,
    start_session,
)
from fleetops.tasks import TaskState
from session_helpers import (
    build,
    fetch_handoff_scenario,
    rescue_scenario,
    robot_entry,
    simple_walk_scenario,
)


def run(scenario, mode=SessionMode.FULL, **kwargs):
    config = SessionConfig(mode=mode, **kwargs)
    session = start_session(config, scenario)
    return session.run_to_completion(), session


def recompute_steps(report):
    dispatches = sum(
        1
        for r in report.log_records
        if r["kind"] == "info" and r.get("data") and "dispatch" in r["data"]
    )
    decisions = sum(1 for r in report.log_records if r["kind"] == "human_decision")
    return dispatches + decisions


class TestStartSession:
    def test_minimal_start(self):
        session = start_session(SessionConfig(), simple_walk_scenario())
        assert session.phase is Phase.ALLOCATING
        assert session.step_count == 0

    def test_manuals_ingested_before_first_allocation(self):
        scenario = build(
            robots=[robot_entry("Rover1"), robot_entry("Dog1", start=(1, 0))],
            tasks=[{"id": "T1", "goals": ["robot_at(Rover1,4,0)"]}],
            manuals=[
                {"agent": "Rover1", "name": "m1", "text": "Height: 0.3 m"},
                {"agent": "Dog1", "name": "m2", "text": "Height: 0.4 m"},
            ],
        )
        session = start_session(SessionConfig(), scenario)
        assert session.kb.document("Rover1", "m1") is not None
        assert session.kb.document("Dog1", "m2") is not None
        manual_seqs = [
            m.seq for m in session.log if m.data and "manual" in (m.data or {})
        ]
        assignment_seqs = [
            m.seq for m in session.log if m.kind is MessageKind.TASK_ASSIGNMENT
        ]
        assert manual_seqs and not assignment_seqs  # allocation not run yet

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"decision_policy": "interactive", "backend": "recorded",
             "recorded_responses": ({"version": "alloc/1", "assignments": []},)},
            {"decision_policy": "scripted"},
            {"backend": "recorded"},
            {"backend": "external"},
            {"max_ticks": 0},
            {"decision_policy": "scripted", "scripted_decisions": ("maybe",)},
        ],
    )
    def test_invalid_configs(self, kwargs):
        with pytest.raises(ConfigError):
            SessionConfig(**kwargs).validate()


class TestRunToCompletion:
    def test_pre_satisfied_goals_complete_at_zero_steps(self):
        scenario = build(
            robots=[robot_entry("Rover1", start=(2, 0))],
            tasks=[{"id": "T1", "goals": ["robot_at(Rover1,2,0)"]}],
        )
        report, session = run(scenario)
        assert session.phase is Phase.COMPLETED
        assert report.success
        assert report.step_count == 0

    def test_simple_walk_completes(self):
        report, session = run(simple_walk_scenario())
        assert report.success
        assert report.outcome == {"T1": "done"}
        assert report.step_count == 1  # one move_to dispatch
        assert report.tick_count >= 6

    def test_deterministic_repeat(self):
        first, _ = run(fetch_handoff_scenario())
        second, _ = run(fetch_handoff_scenario())
        assert first.canonical_bytes() == second.canonical_bytes()

    def test_handoff_after_terrain_block(self):
        report, session = run(fetch_handoff_scenario())
        assert report.success
        records = report.log_records
        exc_seq = next(
            r["seq"] for r in records
            if r["kind"] == "exception" and r["data"]["kind"] == "terrain_block"
        )
        assignments = [
            (r["seq"], r["data"]["agent"])
            for r in records
            if r["kind"] == "task_assignment"
        ]
        assert assignments[0][1] == "R1"  # faster rover first
        superseding = [(s, a) for s, a in assignments if s > exc_seq]
        assert superseding and superseding[0][1] == "R2"
        # a complete status-refresh round sits between exception and handoff
        refresh = [
            r["seq"]
            for r in records
            if r["kind"] == "status_update"
            and r["data"].get("status") == "status_report"
            and exc_seq < r["seq"] < superseding[0][0]
        ]
        assert len(refresh) >= 2  # one per roster agent

    def test_step_accounting_recomputable_from_log(self):
        for scenario in (simple_walk_scenario(), fetch_handoff_scenario()):
            report, _ = run(scenario)
            assert recompute_steps(report) == report.step_count

    def test_verified_precedes_execution(self):
        report, _ = run(fetch_handoff_scenario())
        records = report.log_records
        for task_id in ("T1",):
            accept_seqs = [
                r["seq"]
                for r in records
                if r["kind"] == "verification_verdict"
                and r["data"]["task"] == task_id
                and r["data"]["verdict"] == "accept"
            ]
            dispatch_seqs = [
                r["seq"]
                for r in records
                if r["kind"] == "info"
                and r.get("data")
                and r["data"].get("dispatch", {}).get("task") == task_id
            ]
            assert accept_seqs and dispatch_seqs
            assert min(accept_seqs) < min(dispatch_seqs)

    def test_budget_exhaustion_fails(self):
        report, session = run(simple_walk_scenario(max_ticks=2))
        assert not report.success
        assert session.phase is Phase.FAILED
        assert report.tick_count <= 2


class TestModes:
    def test_full_mode_rescues_overconstrained_task(self):
        report, session = run(rescue_scenario())  # oracle decider says yes
        assert report.success
        assert report.decisions == 1
        assert report.step_count == report.dispatched_actions + 1

    def test_no_human_fails_overconstrained_task(self):
        report, session = run(rescue_scenario(), mode=SessionMode.NO_HUMAN)
        assert not report.success
        gate_msgs = [
            r for r in report.log_records
            if r["kind"] == "human_decision"
            or (r.get("data") and "gate" in (r["data"] or {}))
        ]
        assert gate_msgs == []

    def test_no_verify_mode_emits_zero_verdicts(self):
        report, _ = run(
            fetch_handoff_scenario(), mode=SessionMode.NO_HUMAN_NO_VERIFY
        )
        verdicts = [
            r for r in report.log_records if r["kind"] == "verification_verdict"
        ]
        assert verdicts == []

    def test_full_mode_verdicts_present(self):
        report, _ = run(fetch_handoff_scenario())
        verdicts = [
            r for r in report.log_records if r["kind"] == "verification_verdict"
        ]
        assert verdicts

    def test_scripted_no_fails_only_pairing(self):
        report, session = run(
            rescue_scenario(),
            decision_policy="scripted",
            scripted_decisions=("no",),
        )
        assert not report.success
        assert session.tasks["T1"].state is TaskState.FAILED
        assert report.decisions == 1

    def test_two_disputes_two_decisions(self):
        scenario = build(
            name="twogates",
            map_text=".....\nrrrrr\n.....",
            robots=[
                robot_entry("A", start=(0, 0)),
                robot_entry("B", start=(0, 2)),
            ],
            tasks=[
                {"id": "T1", "requires": ["camera", "rough_terrain"],
                 "goals": ["robot_at(A,4,0)"]},
                {"id": "T2", "requires": ["camera", "rough_terrain"],
                 "goals": ["robot_at(B,4,2)"]},
            ],
            max_ticks=40,
        )
        report, _ = run(scenario)
        assert report.decisions == 2
        assert report.success
        assert report.step_count == report.dispatched_actions + 2


class TestReallocation:
    def test_exception_on_taskless_robot_empty_reallocation(self):
        scenario = build(
            name="idlefault",
            map_text="......",
            robots=[robot_entry("R1"), robot_entry("R2", start=(5, 0))],
            tasks=[{"id": "T1", "goals": ["robot_at(R1,4,0)"]}],
            exceptions=[{"robot": "R2", "tick": 1, "kind": "fault",
                         "detail": "loose wheel"}],
            max_ticks=30,
        )
        report, _ = run(scenario)
        assert report.success
        assignments = [
            r for r in report.log_records if r["kind"] == "task_assignment"
        ]
        assert len(assignments) == 1  # nothing was reassigned
        # but the refresh round did happen after the exception
        exc_seq = next(
            r["seq"] for r in report.log_records if r["kind"] == "exception"
        )
        refresh = [
            r for r in report.log_records
            if r["kind"] == "status_update"
            and r["data"].get("status") == "status_report"
            and r["seq"] > exc_seq
        ]
        assert len(refresh) >= 2

    def test_rejected_pair_never_retried_while_reason_holds(self):
        """Replay audit over randomized 5-robot failure sequences: any
        re-assignment of a previously rejected (task, agent) pair must be
        accepted on retry (the reject reason no longer held)."""
        rng = random.Random(6)
        for trial in range(15):
            walls = ["#" if rng.random() < 0.2 else "." for _ in range(8)]
            map_rows = [
                "".join(
                    "#" if (y == 1 and walls[x] == "#") else "."
                    for x in range(8)
                )
                for y in range(4)
            ]
            robots = []
            for i in range(5):
                robots.append(
                    robot_entry(
                        f"R{i}",
                        max_speed=rng.randint(1, 3),
                        battery_capacity=30,
                        battery_pct=rng.choice([20.0, 60.0, 100.0]),
                        start=(rng.randrange(8), rng.choice([0, 0, 2, 3])),
                    )
                )
            tasks = [
                {
                    "id": f"T{j}",
                    "requires": ["camera"],
                    "target": [rng.randrange(8), 2, min(7, rng.randrange(8)), 3],
                    "goals": [f"found(obj{j},1)"],
                }
                for j in range(3)
            ]
            objects = [
                {"id": f"obj{j}1", "kind": f"obj{j}", "x": rng.randrange(8),
                 "y": rng.choice([2, 3]), "level": 0, "found": False,
                 "carried_by": None}
                for j in range(3)
            ]
            scenario = build(
                name=f"audit{trial}",
                map_text="\n".join(map_rows),
                robots=robots,
                tasks=tasks,
                objects=objects,
                max_ticks=60,
            )
            report, _ = run(scenario, mode=SessionMode.NO_HUMAN)
            rejected: dict[tuple, int] = {}
            for rec in report.log_records:
                data = rec.get("data") or {}
                if (
                    rec["kind"] == "verification_verdict"
                    and data.get("verdict") == "reject"
                ):
                    rejected[(data["task"], data["agent"])] = rec["seq"]
                if rec["kind"] == "task_assignment":
                    pair = (data["task"], data["agent"])
                    if pair in rejected and rejected[pair] < rec["seq"]:
                        verdicts = [
                            r
                            for r in report.log_records
                            if r["kind"] == "verification_verdict"
                            and r["seq"] > rec["seq"]
                            and (r["data"]["task"], r["data"]["agent"]) == pair
                        ]
                        assert verdicts, f"retried {pair} without re-verifying"
                        assert verdicts[0]["data"]["verdict"] == "accept", (
                            f"{pair} retried while its reject reason still held"
                        )


class TestHumanCommands:
    def session(self):
        return start_session(
            SessionConfig(decision_policy="scripted", scripted_decisions=("yes",)),
            fetch_handoff_scenario(),
        )

    def test_broadcast_ack_per_agent(self):
        session = self.session()
        acks = session.human_command("@all stop and report")
        assert len(acks) == 2
        bodies = [m.body for m in session.log.entries[-2:]]
        assert all("stopping" in b for b in bodies)

    def test_direct_command_grows_only_target_context(self):
        session = self.session()
        before = {a: len(s) for a, s in session.agent_contexts.items()}
        session.human_command("status please", channel=Channel.direct("R1"))
        after = {a: len(s) for a, s in session.agent_contexts.items()}
        assert after["R1"] == before["R1"] + 1
        assert after["R2"] == before["R2"]

    def test_group_targeted_action_queues_for_target_only(self):
        scenario = build(
            name="stairs",
            map_text="s....",
            robots=[
                robot_entry(
                    "Dog1", kind="legged",
                    capabilities=("legged", "climb_stairs", "camera"),
                    traversable=("flat", "stairs", "door"), start=(0, 0),
                ),
                robot_entry("Rover1", start=(1, 0),
                            traversable=("flat", "door")),
            ],
            tasks=[{"id": "T1", "goals": ["robot_at(Rover1,4,0)"]}],
        )
        session = start_session(
            SessionConfig(decision_policy="scripted", scripted_decisions=()),
            scenario,
        ) if False else start_session(
            SessionConfig(decision_policy="scripted", scripted_decisions=("yes",)),
            scenario,
        )
        session.human_command("@Dog1 climb_up")
        assert [a.op for a in session.human_queues["Dog1"]] == ["climb_up"]
        assert list(session.human_queues["Rover1"]) == []

    def test_unknown_agent_rejected(self):
        session = self.session()
        with pytest.raises(UnknownAgent):
            session.human_command("@Ghost go")

    def test_closed_session_rejects_commands(self):
        config = SessionConfig(decision_policy="scripted", scripted_decisions=("yes",))
        session = start_session(config, simple_walk_scenario())
        session.run_to_completion()
        with pytest.raises(SessionClosed):
            session.human_command("@all stop")

    def test_benchmark_policies_refuse_commands(self):
        session = start_session(SessionConfig(), simple_walk_scenario())
        with pytest.raises(ConfigError):
            session.human_command("@all stop")


class TestCheckpoint:
    def test_checkpoint_resume_at_start_matches_fresh(self):
        config = SessionConfig()
        fresh = start_session(config, fetch_handoff_scenario()).run_to_completion()
        session = start_session(SessionConfig(), fetch_handoff_scenario())
        resumed = Session.resume(session.checkpoint())
        assert resumed.run_to_completion().canonical_bytes() == fresh.canonical_bytes()

    def test_checkpoint_resume_mid_run_matches_unbroken(self):
        unbroken = start_session(
            SessionConfig(), fetch_handoff_scenario()
        ).run_to_completion()
        session = start_session(SessionConfig(), fetch_handoff_scenario())
        for _ in range(3):  # into execution / reallocation territory
            if session.live:
                session.step_phase()
        blob = json.dumps(session.checkpoint())
        resumed = Session.resume(json.loads(blob))
        assert resumed.run_to_completion().canonical_bytes() == unbroken.canonical_bytes()

    def test_truncated_checkpoint_rejected(self):
        session = start_session(SessionConfig(), simple_walk_scenario())
        checkpoint = session.checkpoint()
        checkpoint["step_count"] = 99  # tamper
        with pytest.raises(CorruptCheckpoint):
            Session.resume(checkpoint)
        with pytest.raises(CorruptCheckpoint):
            Session.resume({"format": "checkpoint/1"})


class TestRoutingIsolationInSession:
    def test_direct_never_enters_other_contexts(self):
        session = self.make()
        session.human_command("secret move", channel=Channel.direct("R1"))
        r1_seqs = set(session.agent_contexts["R1"])
        r2_seqs = set(session.agent_contexts["R2"])
        direct_seqs = {m.seq for m in session.log if m.channel.is_direct}
        command_seqs = {
            m.seq
            for m in session.log
            if m.channel.is_direct and m.kind is MessageKind.HUMAN_COMMAND
        }
        assert command_seqs <= r1_seqs  # the target received the command
        assert not (direct_seqs & r2_seqs)  # nothing leaked to the other robot

    def make(self):
        return start_session(
            SessionConfig(decision_policy="scripted", scripted_decisions=("yes",)),
            fetch_handoff_scenario(),
        )
