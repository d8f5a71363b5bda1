"""Scenario-suite runner: success rate and average steps across
supervision ablations, with machine-readable report emission.

SR is the fraction of runs in which every task finished within budget.
AS is the mean step count over successful runs (primary; a run's steps
are its dispatched robot actions plus human decisions); the mean over all
runs is carried as a secondary column since failed-run accounting is a
matter of convention. Published reference numbers ship alongside for
side-by-side display only; they never gate a pass/fail beyond the
ablation direction checks.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional

from .errors import IncomparableSuites, UnsupportedFormat
from .session import SessionConfig, SessionReport, start_session
from .world import Scenario

# Published results displayed next to ours for orientation (the original
# system ran a hosted language model on a full household simulator, so the
# numbers are not comparable targets, only context).
REFERENCE_RESULTS: dict[str, dict] = {
    "full": {
        "scenes": [(0.90, 8.1), (0.96, 17.0), (0.89, 16.0), (0.92, 15.0), (0.95, 19.1)],
        "average": (0.92, 15.04),
    },
    "no_human": {
        "scenes": [(0.85, 9.6), (0.92, 21.0), (0.83, 19.0), (0.86, 19.0), (0.95, 20.4)],
        "average": (0.882, 17.00),
    },
    "no_human_no_verify": {
        "scenes": [(0.65, 12.5), (0.80, 24.0), (0.78, 35.0), (0.77, 27.5), (0.83, 22.1)],
        "average": (0.766, 24.22),
    },
}

BASELINE_REFERENCES: dict[str, dict] = {
    "rl_vmc": {
        "scenes": [(0.70, 12.3), (0.55, 32.0), (0.65, 13.7), (0.75, 21.7), (0.87, 28.6)],
        "average": (0.704, 21.66),
    },
    "rl_prim": {
        "scenes": [(0.60, 10.0), (0.74, 27.0), (0.59, 17.8), (0.85, 19.4), (0.68, 21.7)],
        "average": (0.692, 19.18),
    },
    "rl_prim_hist": {
        "scenes": [(0.54, 9.0), (0.85, 19.0), (0.88, 19.6), (0.79, 18.0), (0.79, 22.4)],
        "average": (0.77, 17.6),
    },
    "dmrs_2d": {
        "scenes": [(0.73, 8.0), (0.79, 19.0), (0.78, 18.7), (0.82, 17.9), (0.84, 23.2)],
        "average": (0.792, 17.36),
    },
    "hmas_2": {
        "scenes": [(0.76, 7.5), (0.93, 18.0), (0.82, 17.0), (0.96, 16.0), (0.93, 20.1)],
        "average": (0.88, 15.72),
    },
}


@dataclass
class SceneStats:
    scenario: str
    exception_bearing: bool
    runs: int
    successes: int
    as_success: Optional[float]  # None when nothing succeeded
    as_all: float
    decisions: int
    infeasible: int

    @property
    def sr(self) -> float:
        return self.successes / self.runs if self.runs else 0.0


@dataclass
class SuiteSummary:
    mode: str
    base_seed: int
    repetitions: int
    scenes: list[SceneStats]
    reports: list[SessionReport] = field(default_factory=list, compare=False)

    @property
    def sr_average(self) -> float:
        if not self.scenes:
            return 0.0
        return sum(s.sr for s in self.scenes) / len(self.scenes)

    @property
    def as_success_average(self) -> Optional[float]:
        defined = [s.as_success for s in self.scenes if s.as_success is not None]
        if not defined:
            return None
        return sum(defined) / len(defined)

    @property
    def as_all_average(self) -> float:
        if not self.scenes:
            return 0.0
        return sum(s.as_all for s in self.scenes) / len(self.scenes)

    def scene(self, name: str) -> SceneStats:
        for stats in self.scenes:
            if stats.scenario == name:
                return stats
        raise KeyError(name)

    def run_key(self) -> list[tuple[str, int]]:
        return [(r.scenario, r.seed) for r in self.reports]


def run_suite(
    scenarios: list[Scenario],
    config: SessionConfig,
    repetitions: int,
    keep_reports: bool = True,
) -> SuiteSummary:
    """Run every scenario ``repetitions`` times with seeds base..base+r-1
    and fold the per-run reports into per-scene SR/AS stats."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    scenes: list[SceneStats] = []
    all_reports: list[SessionReport] = []
    for scenario in scenarios:
        reports = []
        for offset in range(repetitions):
            run_config = SessionConfig(
                mode=config.mode,
                seed=config.seed + offset,
                max_ticks=config.max_ticks,
                decision_policy=config.decision_policy,
                scripted_decisions=config.scripted_decisions,
                decision_timeout=config.decision_timeout,
                backend=config.backend,
                recorded_responses=config.recorded_responses,
                external_transport=config.external_transport,
            )
            session = start_session(run_config, scenario)
            reports.append(session.run_to_completion())
        scenes.append(fold_scene(scenario, reports))
        all_reports.extend(reports)
    return SuiteSummary(
        mode=config.mode.value,
        base_seed=config.seed,
        repetitions=repetitions,
        scenes=scenes,
        reports=all_reports if keep_reports else [],
    )


def fold_scene(scenario: Scenario, reports: list[SessionReport]) -> SceneStats:
    wins = [r for r in reports if r.success]
    return SceneStats(
        scenario=scenario.name,
        exception_bearing=bool(scenario.exception_schedule),
        runs=len(reports),
        successes=len(wins),
        as_success=(
            sum(r.step_count for r in wins) / len(wins) if wins else None
        ),
        as_all=sum(r.step_count for r in reports) / len(reports),
        decisions=sum(r.decisions for r in reports),
        infeasible=sum(r.infeasible_dispatches for r in reports),
    )


def recompute_from_reports(summary: SuiteSummary) -> SuiteSummary:
    """Re-derive every stat from the persisted per-run reports; used as
    the internal-consistency oracle (must equal the incremental fold)."""
    by_scene: dict[str, list[SessionReport]] = {}
    order: list[str] = []
    for report in summary.reports:
        if report.scenario not in by_scene:
            order.append(report.scenario)
        by_scene.setdefault(report.scenario, []).append(report)
    scenes = []
    for name in order:
        reports = by_scene[name]
        old = summary.scene(name)
        wins = [r for r in reports if all(v == "done" for v in r.outcome.values())]
        steps = [
            sum(
                1
                for rec in r.log_records
                if (rec["kind"] == "info" and rec.get("data") and "dispatch" in rec["data"])
                or rec["kind"] == "human_decision"
            )
            for r in reports
        ]
        win_steps = [s for s, r in zip(steps, reports) if r.success]
        scenes.append(
            SceneStats(
                scenario=name,
                exception_bearing=old.exception_bearing,
                runs=len(reports),
                successes=len(wins),
                as_success=(sum(win_steps) / len(win_steps) if win_steps else None),
                as_all=sum(steps) / len(steps),
                decisions=sum(r.decisions for r in reports),
                infeasible=sum(r.infeasible_dispatches for r in reports),
            )
        )
    return SuiteSummary(
        mode=summary.mode,
        base_seed=summary.base_seed,
        repetitions=summary.repetitions,
        scenes=scenes,
    )


# -- ablation ------------------------------------------------------------

MODE_ORDER = ("full", "no_human", "no_human_no_verify")


@dataclass
class AblationReport:
    per_scene: dict[str, dict[str, tuple[float, Optional[float]]]]
    averages: dict[str, tuple[float, Optional[float]]]
    sr_direction_pass: bool
    as_direction_pass: bool
    strict_pass: bool
    strict_detail: dict[str, bool]

    @property
    def direction_pass(self) -> bool:
        return self.sr_direction_pass and self.as_direction_pass and self.strict_pass


def ablation_compare(suites: dict[str, SuiteSummary]) -> AblationReport:
    """Check the expected supervision ordering over matched suites.

    Success rate must be non-increasing as supervision is stripped
    (averages), with a strict gap between the full and unverified modes on
    every exception-bearing scene. Average steps must be non-decreasing,
    compared pairwise over the scenes where both modes completed at least
    one run (step means over empty success sets are undefined).
    """
    missing = [m for m in MODE_ORDER if m not in suites]
    if missing:
        raise IncomparableSuites(f"missing suites for modes: {missing}")
    keys = {m: suites[m].run_key() for m in MODE_ORDER}
    names = {m: [s.scenario for s in suites[m].scenes] for m in MODE_ORDER}
    for m in MODE_ORDER[1:]:
        if names[m] != names[MODE_ORDER[0]]:
            raise IncomparableSuites("suites cover different scenarios")
        if keys[m] and keys[MODE_ORDER[0]] and keys[m] != keys[MODE_ORDER[0]]:
            raise IncomparableSuites("suites ran different (scenario, seed) sets")

    per_scene: dict[str, dict[str, tuple[float, Optional[float]]]] = {}
    for name in names["full"]:
        per_scene[name] = {
            m: (suites[m].scene(name).sr, suites[m].scene(name).as_success)
            for m in MODE_ORDER
        }
    averages = {
        m: (suites[m].sr_average, suites[m].as_success_average) for m in MODE_ORDER
    }

    sr_ok = (
        averages["full"][0] >= averages["no_human"][0] >= averages["no_human_no_verify"][0]
    )

    def as_pair_ok(left: str, right: str) -> bool:
        common = [
            n
            for n in names["full"]
            if suites[left].scene(n).as_success is not None
            and suites[right].scene(n).as_success is not None
        ]
        if not common:
            return True
        mean_left = sum(suites[left].scene(n).as_success for n in common) / len(common)
        mean_right = sum(suites[right].scene(n).as_success for n in common) / len(common)
        return mean_left <= mean_right + 1e-9

    as_ok = as_pair_ok("full", "no_human") and as_pair_ok("no_human", "no_human_no_verify")

    strict_detail = {}
    for name in names["full"]:
        if suites["full"].scene(name).exception_bearing:
            strict_detail[name] = (
                suites["full"].scene(name).sr
                > suites["no_human_no_verify"].scene(name).sr
            )
    strict_ok = all(strict_detail.values()) if strict_detail else True

    return AblationReport(
        per_scene=per_scene,
        averages=averages,
        sr_direction_pass=sr_ok,
        as_direction_pass=as_ok,
        strict_pass=strict_ok,
        strict_detail=strict_detail,
    )


# -- emission -------------------------------------------------------------

def _fmt_sr(value: float) -> str:
    return f"{value:.3f}"


def _fmt_as(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.2f}"


CSV_COLUMNS = [
    "mode", "base_seed", "repetitions", "scene", "exception_bearing",
    "runs", "successes", "sr", "as_success", "as_all", "decisions", "infeasible",
]


def emit_report(summary: SuiteSummary, format: str = "table") -> str:
    """Render a suite summary; identical input yields identical bytes."""
    if format == "table":
        return _emit_table(summary)
    if format == "csv":
        return _emit_csv(summary)
    if format == "json-lines":
        return _emit_jsonl(summary)
    raise UnsupportedFormat(f"unknown report format {format!r}")


def _emit_table(summary: SuiteSummary) -> str:
    lines = [
        f"mode: {summary.mode}  seed: {summary.base_seed}  reps: {summary.repetitions}",
        f"{'scene':<14} {'SR':>6} {'AS':>8} {'AS(all)':>8} {'runs':>5}",
    ]
    for stats in summary.scenes:
        lines.append(
            f"{stats.scenario:<14} {_fmt_sr(stats.sr):>6} {_fmt_as(stats.as_success):>8} "
            f"{_fmt_as(stats.as_all):>8} {stats.runs:>5}"
        )
    lines.append(
        f"{'Average':<14} {_fmt_sr(summary.sr_average):>6} "
        f"{_fmt_as(summary.as_success_average):>8} {_fmt_as(summary.as_all_average):>8}"
        f" {'':>5}"
    )
    reference = REFERENCE_RESULTS.get(summary.mode)
    if reference and len(summary.scenes) == len(reference["scenes"]):
        cells = " ".join(
            f"{_fmt_sr(sr)}/{_fmt_as(as_)}" for sr, as_ in reference["scenes"]
        )
        avg_sr, avg_as = reference["average"]
        lines.append(
            f"published reference (display only): {cells}  avg {_fmt_sr(avg_sr)}/{_fmt_as(avg_as)}"
        )
    return "\n".join(lines) + "\n"


def _emit_csv(summary: SuiteSummary) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for stats in summary.scenes:
        writer.writerow(
            [
                summary.mode,
                summary.base_seed,
                summary.repetitions,
                stats.scenario,
                int(stats.exception_bearing),
                stats.runs,
                stats.successes,
                _fmt_sr(stats.sr),
                _fmt_as(stats.as_success),
                _fmt_as(stats.as_all),
                stats.decisions,
                stats.infeasible,
            ]
        )
    return out.getvalue()


def parse_csv(text: str) -> SuiteSummary:
    """Inverse of the csv emitter (up to float formatting)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_COLUMNS:
        raise UnsupportedFormat("not a suite csv")
    scenes = []
    mode, seed, reps = "full", 0, 1
    for row in rows[1:]:
        record = dict(zip(CSV_COLUMNS, row))
        mode = record["mode"]
        seed = int(record["base_seed"])
        reps = int(record["repetitions"])
        scenes.append(
            SceneStats(
                scenario=record["scene"],
                exception_bearing=bool(int(record["exception_bearing"])),
                runs=int(record["runs"]),
                successes=int(record["successes"]),
                as_success=(
                    None if record["as_success"] == "-" else float(record["as_success"])
                ),
                as_all=float(record["as_all"]),
                decisions=int(record["decisions"]),
                infeasible=int(record["infeasible"]),
            )
        )
    return SuiteSummary(mode=mode, base_seed=seed, repetitions=reps, scenes=scenes)


def _emit_jsonl(summary: SuiteSummary) -> str:
    lines = [
        json.dumps(
            {"record": "suite", "mode": summary.mode, "base_seed": summary.base_seed,
             "repetitions": summary.repetitions},
            sort_keys=True, separators=(",", ":"),
        )
    ]
    for stats in summary.scenes:
        lines.append(
            json.dumps(
                {
                    "record": "scene",
                    "scene": stats.scenario,
                    "exception_bearing": stats.exception_bearing,
                    "runs": stats.runs,
                    "successes": stats.successes,
                    "sr": _fmt_sr(stats.sr),
                    "as_success": _fmt_as(stats.as_success),
                    "as_all": _fmt_as(stats.as_all),
                    "decisions": stats.decisions,
                    "infeasible": stats.infeasible,
                },
                sort_keys=True, separators=(",", ":"),
            )
        )
    lines.append(
        json.dumps(
            {
                "record": "average",
                "sr": _fmt_sr(summary.sr_average),
                "as_success": _fmt_as(summary.as_success_average),
                "as_all": _fmt_as(summary.as_all_average),
            },
            sort_keys=True, separators=(",", ":"),
        )
    )
    return "\n".join(lines) + "\n"


def ablation_table(report: AblationReport) -> str:
    """Human-readable side-by-side of the three modes plus direction flags."""
    lines = [f"{'scene':<14}" + "".join(f" {m:>24}" for m in MODE_ORDER)]
    for name, row in report.per_scene.items():
        cells = "".join(
            f" {_fmt_sr(row[m][0]):>12}/{_fmt_as(row[m][1]):>11}" for m in MODE_ORDER
        )
        lines.append(f"{name:<14}{cells}")
    cells = "".join(
        f" {_fmt_sr(report.averages[m][0]):>12}/{_fmt_as(report.averages[m][1]):>11}"
        for m in MODE_ORDER
    )
    lines.append(f"{'Average':<14}{cells}")
    lines.append(
        "direction: "
        f"SR {'pass' if report.sr_direction_pass else 'FAIL'}, "
        f"AS {'pass' if report.as_direction_pass else 'FAIL'}, "
        f"strict {'pass' if report.strict_pass else 'FAIL'} "
        f"({', '.join(f'{k}={v}' for k, v in sorted(report.strict_detail.items())) or 'no exception scenes'})"
    )
    return "\n".join(lines) + "\n"
