"""Headless command line: run suites, compare ablations, validate and
replay scenarios, or serve the operator gateway.

Exit codes: 0 success, 2 validation/replay failure, 3 ablation direction
failure under --strict.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import scenes as bundled
from .bench import (
    SuiteSummary,
    ablation_compare,
    ablation_table,
    emit_report,
    run_suite,
)
from .errors import FleetError, ScenarioParseError, ScenarioValidationError
from .session import SessionConfig, SessionMode, start_session
from .world import Scenario, load_scenario, parse_scenario

MODE_FLAGS = {
    "full": SessionMode.FULL,
    "no-human": SessionMode.NO_HUMAN,
    "no-human-no-verify": SessionMode.NO_HUMAN_NO_VERIFY,
}


def _resolve_scenes(specs: list[str]) -> list[Scenario]:
    if specs == ["bundled"]:
        return bundled.bundled_scenes()
    if specs == ["infeasible"]:
        return bundled.infeasible_suite()
    return [load_scenario(path) for path in specs]


def _config(args, mode: SessionMode) -> SessionConfig:
    recorded: tuple = ()
    if getattr(args, "recorded", None):
        data = json.loads(Path(args.recorded).read_text())
        recorded = tuple(data if isinstance(data, list) else [data])
    decisions: tuple = ()
    if getattr(args, "decisions", None):
        decisions = tuple(args.decisions.split(","))
    return SessionConfig(
        mode=mode,
        seed=args.seed,
        decision_policy=args.decision_policy,
        scripted_decisions=decisions,
        backend="rule_based" if args.backend == "rule-based" else args.backend,
        recorded_responses=recorded,
    )


def _write_bundles(
    summary: SuiteSummary, scenarios, base_config: SessionConfig, out_dir: Path
) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    by_name = {s.name: s for s in scenarios}
    paths = []
    for report in summary.reports:
        config = {**base_config.to_json(), "mode": report.mode, "seed": report.seed}
        bundle = {
            "format": "replay/1",
            "config": config,
            "scenario": by_name[report.scenario].to_json(),
            "report": report.to_json(),
        }
        path = out_dir / f"{report.scenario}_{report.mode}_seed{report.seed}.bundle.json"
        path.write_text(json.dumps(bundle, sort_keys=True, indent=1))
        paths.append(path)
    return paths


def cmd_run(args) -> int:
    scenarios = _resolve_scenes(args.scenes)
    config = _config(args, MODE_FLAGS[args.mode])
    summary = run_suite(scenarios, config, repetitions=args.reps)
    print(emit_report(summary, args.format), end="")
    if args.out:
        out_dir = Path(args.out)
        paths = _write_bundles(summary, scenarios, config, out_dir)
        (out_dir / "suite.csv").write_text(emit_report(summary, "csv"))
        (out_dir / "suite.jsonl").write_text(emit_report(summary, "json-lines"))
        print(f"wrote {len(paths)} replay bundles to {out_dir}", file=sys.stderr)
    return 0


def cmd_ablate(args) -> int:
    scenarios = _resolve_scenes(args.scenes)
    suites = {}
    for mode in SessionMode:
        config = _config(args, mode)
        suites[mode.value] = run_suite(scenarios, config, repetitions=args.reps)
    report = ablation_compare(suites)
    print(ablation_table(report), end="")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for mode, suite in suites.items():
            (out_dir / f"suite_{mode}.csv").write_text(emit_report(suite, "csv"))
    if args.strict and not report.direction_pass:
        print("ablation direction check failed", file=sys.stderr)
        return 3
    return 0


def cmd_validate(args) -> int:
    failures = 0
    for path in args.scenes:
        try:
            scenario = load_scenario(path)
        except ScenarioValidationError as exc:
            failures += 1
            print(f"{path}: INVALID", file=sys.stderr)
            for violation in exc.violations:
                print(f"  - {violation}", file=sys.stderr)
        except (ScenarioParseError, OSError) as exc:
            failures += 1
            print(f"{path}: PARSE ERROR: {exc}", file=sys.stderr)
        else:
            print(f"{path}: ok ({scenario.name}, {len(scenario.tasks)} tasks)")
    return 2 if failures else 0


def cmd_replay(args) -> int:
    failures = 0
    for path in args.bundles:
        data = json.loads(Path(path).read_text())
        if data.get("format") != "replay/1":
            print(f"{path}: not a replay bundle", file=sys.stderr)
            failures += 1
            continue
        scenario = parse_scenario(data["scenario"])
        config = SessionConfig.from_json(
            {"scripted_decisions": [], **data["config"]}
        )
        session = start_session(config, scenario)
        report = session.run_to_completion()
        fresh = hashlib.sha256(report.canonical_bytes()).hexdigest()
        stored_report = data["report"]
        stored = hashlib.sha256(
            json.dumps(stored_report, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()
        if fresh == stored:
            print(f"{path}: replay matches ({fresh[:12]})")
        else:
            print(f"{path}: MISMATCH fresh={fresh[:12]} stored={stored[:12]}",
                  file=sys.stderr)
            failures += 1
    return 2 if failures else 0


def cmd_serve(args) -> int:
    from .gateway import serve

    gateway = serve(args.host, args.port, args.ws_port)
    print(
        f"listening on {gateway.host}:{gateway.port} (ws {gateway.ws_port})",
        flush=True,
    )
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        gateway.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fleetops",
        description="Supervised multi-robot orchestration benchmark and gateway.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run scenarios and report SR/AS")
    run.add_argument("scenes", nargs="+",
                     help="scenario files, or 'bundled' / 'infeasible'")
    run.add_argument("--mode", choices=sorted(MODE_FLAGS), default="full")
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--reps", type=int, default=1)
    run.add_argument("--backend", choices=["rule-based", "recorded"],
                     default="rule-based")
    run.add_argument("--recorded",
                     help="JSON file with captured backend proposals")
    run.add_argument("--decision-policy", choices=["oracle", "auto_yes", "scripted"],
                     default="oracle")
    run.add_argument("--decisions",
                     help="comma-separated yes/no list for the scripted policy")
    run.add_argument("--format", choices=["table", "csv", "json-lines"],
                     default="table")
    run.add_argument("--out", help="directory for replay bundles and reports")
    run.set_defaults(fn=cmd_run)

    ablate = sub.add_parser("ablate", help="run all three modes and compare")
    ablate.add_argument("--scenes", nargs="+", default=["bundled"])
    ablate.add_argument("--seed", type=int, default=1)
    ablate.add_argument("--reps", type=int, default=10)
    ablate.add_argument("--backend", choices=["rule-based"], default="rule-based")
    ablate.add_argument("--decision-policy", choices=["oracle"], default="oracle")
    ablate.add_argument("--strict", action="store_true",
                        help="exit 3 when the ablation direction fails")
    ablate.add_argument("--out")
    ablate.set_defaults(fn=cmd_ablate)

    validate = sub.add_parser("validate", help="check scenario files")
    validate.add_argument("scenes", nargs="+")
    validate.set_defaults(fn=cmd_validate)

    replay = sub.add_parser("replay", help="re-run replay bundles and compare")
    replay.add_argument("bundles", nargs="+")
    replay.set_defaults(fn=cmd_replay)

    serve_cmd = sub.add_parser("serve", help="serve the operator gateway")
    serve_cmd.add_argument("--host", default="127.0.0.1")
    serve_cmd.add_argument("--port", type=int, default=7331)
    serve_cmd.add_argument("--ws-port", type=int, default=7332)
    serve_cmd.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FleetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
