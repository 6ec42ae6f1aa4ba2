"""Command-line scenario runner.

Subcommands: `run` (any scenario), `sweep` (camera-angle grid), `exp1`
(bench calibration sequence), `exp2` (screw alignment). Exit code is 0 only
when every task of every repeat converged.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .errors import UvsError
from .harness import RunReport, emit_report, run_exp1_sequence, run_scenario, sweep_camera_angle
from .scenario import Scenario, builtin_scenario, load_scenario


def _resolve_scenario(name_or_path: str) -> Scenario:
    path = Path(name_or_path)
    if path.exists():
        return load_scenario(path)
    return builtin_scenario(name_or_path)


def _apply_seed(scenario: Scenario, seed: int | None) -> Scenario:
    if seed is None:
        return scenario
    resolved = scenario.to_dict()
    resolved["seed"] = seed
    return replace(scenario, seed=seed, resolved=resolved)


def _print_report(report: RunReport) -> None:
    tag = ""
    if report.sweep_key:
        tag = " [" + ", ".join(f"{k}={v:g}" for k, v in sorted(report.sweep_key.items())) + "]"
    print(f"scenario {report.scenario}{tag}: seed={report.seed} repeats={report.repeats}")
    for s in report.stats:
        parts = [f"  {s.task} ({s.kind}): {s.converged_count}/{s.repeats} converged"]
        if s.position_error_mean is not None:
            parts.append(f"pos_err={s.position_error_mean:.3e}m (std {s.position_error_std:.1e})")
        if s.angle_error_mean is not None:
            parts.append(f"angle_err={s.angle_error_mean:.3f}deg")
        if s.height_mean is not None:
            parts.append(f"height={s.height_mean:.3e}m")
        if s.condition_number_mean is not None:
            parts.append(f"cond={s.condition_number_mean:.1f}")
        print(" ".join(parts))


def _add_common(parser: argparse.ArgumentParser, default_scenario: str | None) -> None:
    if default_scenario is None:
        parser.add_argument("--scenario", required=True, help="scenario YAML path or builtin name")
    else:
        parser.add_argument("--scenario", default=default_scenario, help="scenario YAML path or builtin name")
    parser.add_argument("--repeats", type=int, default=None, help="override the scenario's repeat count")
    parser.add_argument("--seed", type=int, default=None, help="override the scenario's seed")
    parser.add_argument("--out", default=None, help="directory for CSV/JSON reports")
    parser.add_argument("--format", choices=("csv", "json"), default="json")
    parser.add_argument("--timings", action="store_true", help="include wall-clock fields (breaks byte-stable output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uvs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("run", help="run a scenario's task sequence"), None)
    sweep = sub.add_parser("sweep", help="run the scenario once per camera angle")
    _add_common(sweep, None)
    sweep.add_argument("--angles", default=None, help="comma-separated separation angles in degrees")
    _add_common(sub.add_parser("exp1", help="bench calibration sequence"), "exp1")
    _add_common(sub.add_parser("exp2", help="screw alignment task"), "exp2")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = _apply_seed(_resolve_scenario(args.scenario), args.seed)
        if args.command == "sweep":
            if args.angles is not None:
                angles = [float(a) for a in args.angles.split(",") if a.strip()]
            elif scenario.sweep_angles_deg:
                angles = list(scenario.sweep_angles_deg)
            else:
                print("error: no sweep angles given (use --angles or a scenario sweep section)", file=sys.stderr)
                return 2
            reports = sweep_camera_angle(scenario, angles, args.repeats)
        elif args.command == "exp1":
            reports = [run_exp1_sequence(scenario, args.repeats)]
        else:
            reports = [run_scenario(scenario, args.repeats)]
    except (UvsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    for report in reports:
        _print_report(report)
        if args.out:
            for path in emit_report(report, args.format, args.out, include_timings=args.timings):
                print(f"  wrote {path}")
    return 0 if all(r.all_converged for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
