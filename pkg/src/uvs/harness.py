"""Scenario runner: executes task sequences against the simulated world,
scores results against the ground-truth oracle, and emits deterministic
CSV/JSON reports.

Repeats use seed + repeat-index noise streams, so identical scenarios and
seeds reproduce byte-identical reports; camera-angle sweeps reuse the same
per-repeat seeds at every grid point (common random numbers), which also
sharpens trend comparisons across angles.
"""

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import JointLimitError, ScenarioError
from .geometry import angle_between
from .jacobian import condition_number
from .scenario import Scenario, TaskSpec, with_camera_angle
from .servo import (
    Robot,
    ServoResult,
    run_orientation_servo,
    run_pose_servo,
    run_position_servo,
    run_shadow_servo,
)
from .world import RobotState, observe, perturb, tool_axis_world, tool_tip_world

# Reports compare servoed poses against the simulator's exact geometry; a
# physical system would compare against averaged manual alignments instead.
ORACLE_NOTE = (
    "3D reference errors are measured against the simulator's ground truth, "
    "which stands in for averaged manual alignments."
)


@dataclass
class TaskRecord:
    task: str
    kind: str
    repeat: int
    converged: bool
    aborted: str | None
    iterations: int
    rounds: int | None
    final_feature_error: float
    final_coordinates: tuple[float, ...]
    oracle_position_error_m: float | None = None
    oracle_angle_error_deg: float | None = None
    oracle_height_m: float | None = None
    condition_number: float | None = None
    jacobian_drift: float | None = None
    task_success: bool = False
    wall_time_s: float = 0.0
    trajectory: list = field(default_factory=list, repr=False)


@dataclass
class TaskStats:
    """Per-task aggregate over repeats. `success_count` counts repeats that
    converged and met the task's physical success tolerances (equal to
    `converged_count` when a task defines none)."""

    task: str
    kind: str
    repeats: int
    converged_count: int
    success_count: int
    iterations_mean: float
    feature_error_mean: float
    position_error_mean: float | None = None
    position_error_std: float | None = None
    angle_error_mean: float | None = None
    angle_error_std: float | None = None
    height_mean: float | None = None
    height_std: float | None = None
    condition_number_mean: float | None = None
    wall_time_mean_s: float = 0.0

    @property
    def failure_rate(self) -> float:
        return 1.0 - self.success_count / self.repeats


@dataclass
class RunReport:
    scenario: str
    seed: int
    repeats: int
    notes: tuple[str, ...]
    config: dict
    records: list[TaskRecord]
    stats: list[TaskStats]
    sweep_key: dict | None = None

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.records)

    def task_stats(self, name: str) -> TaskStats:
        for s in self.stats:
            if s.task == name:
                return s
        raise KeyError(name)


class _SceneBox:
    """Mutable holder so scheduled disturbances reach in-flight observations."""

    def __init__(self, scene):
        self.scene = scene


def _oracle_errors(record: TaskRecord, spec: TaskSpec, scene, result: ServoResult | None):
    if spec.kind in ("position", "pose"):
        tip = tool_tip_world(scene)
        record.oracle_position_error_m = float(np.linalg.norm(tip - scene.targets[spec.target]))
    if spec.kind in ("orientation", "pose"):
        axis = scene.target_axes[spec.goal_axes[0]].direction
        tool_axis = tool_axis_world(scene, spec.tool_axes[0])
        record.oracle_angle_error_deg = math.degrees(angle_between(tool_axis, axis))
    if spec.kind == "shadow":
        record.oracle_height_m = scene.plane.signed_distance(tool_tip_world(scene))
    record.task_success = record.converged
    if spec.success_tolerance_m is not None and record.oracle_position_error_m is not None:
        record.task_success = record.task_success and record.oracle_position_error_m <= spec.success_tolerance_m
    if spec.success_tolerance_m is not None and record.oracle_height_m is not None:
        record.task_success = record.task_success and abs(record.oracle_height_m) <= spec.success_tolerance_m
    if spec.success_tolerance_deg is not None and record.oracle_angle_error_deg is not None:
        record.task_success = record.task_success and record.oracle_angle_error_deg <= spec.success_tolerance_deg
    if result is not None and result.final_jacobian is not None:
        record.condition_number = condition_number(result.final_jacobian)
        if result.initial_jacobian is not None:
            j0 = result.initial_jacobian.matrix
            jf = result.final_jacobian.matrix
            if j0.shape == jf.shape:
                denom = float(np.linalg.norm(j0))
                if denom > 0:
                    record.jacobian_drift = float(np.linalg.norm(jf - j0)) / denom


def _run_task(spec: TaskSpec, robot: Robot, sense, estimator, step_hook) -> ServoResult:
    if spec.kind == "position":
        return run_position_servo(sense, robot, spec.target, spec.settings.to_task(), estimator, step_hook=step_hook)
    if spec.kind == "orientation":
        return run_orientation_servo(sense, robot, spec.goal_axes, spec.settings.to_task(), estimator,
                                     tool_axes=spec.tool_axes, step_hook=step_hook)
    if spec.kind == "pose":
        return run_pose_servo(sense, robot, spec.target, spec.goal_axes,
                              spec.position_settings.to_task(), spec.orientation_settings.to_task(),
                              estimator, tool_axes=spec.tool_axes, max_rounds=spec.max_rounds,
                              step_hook=step_hook)
    if spec.kind == "shadow":
        return run_shadow_servo(sense, robot, spec.side_camera, spec.settings.to_task(), estimator,
                                step_hook=step_hook)
    raise ScenarioError(f"cannot run task kind {spec.kind!r}")


def run_scenario(scenario: Scenario, repeats: int | None = None) -> RunReport:
    """Execute every task in order, `repeats` times, with fresh per-repeat
    noise (seed + repeat index). Scheduled disturbances fire right before the
    observation of their global control iteration. Task aborts are recorded
    and the run continues."""
    repeats = scenario.repeats if repeats is None else repeats
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    records: list[TaskRecord] = []

    for rep in range(repeats):
        rng = np.random.default_rng(scenario.seed + rep)
        box = _SceneBox(scenario.scene)
        robot = Robot(scenario.scene.robot, scenario.scene.joint_limits)
        schedule = sorted(scenario.disturbances, key=lambda d: d.iteration)
        next_disturbance = 0
        base_iterations = 0

        def sense(r):
            return observe(box.scene.with_robot_coordinates(r), rng)

        def apply_due(global_iteration):
            nonlocal next_disturbance
            while next_disturbance < len(schedule) and schedule[next_disturbance].iteration <= global_iteration:
                spec = schedule[next_disturbance]
                box.scene = perturb(box.scene, spec.resolve(box.scene))
                next_disturbance += 1

        def hook(local_iteration):
            apply_due(base_iterations + local_iteration)

        for spec in scenario.tasks:
            apply_due(base_iterations)
            start = time.perf_counter()
            if spec.kind == "move":
                try:
                    state = RobotState(np.asarray(spec.coordinates), robot.state.model_kind)
                    if not robot.limits.contains(state.coordinates):
                        raise JointLimitError(f"move target {spec.coordinates} violates joint limits")
                    robot.state = state
                    record = TaskRecord(spec.name, spec.kind, rep, True, None, 0, None, 0.0,
                                        tuple(float(x) for x in robot.state.coordinates), task_success=True)
                except JointLimitError as exc:
                    record = TaskRecord(spec.name, spec.kind, rep, False, str(exc), 0, None, 0.0,
                                        tuple(float(x) for x in robot.state.coordinates))
                record.wall_time_s = time.perf_counter() - start
                records.append(record)
                continue
            result = _run_task(spec, robot, sense, scenario.estimator, hook)
            base_iterations += result.iterations
            record = TaskRecord(
                task=spec.name,
                kind=spec.kind,
                repeat=rep,
                converged=result.converged,
                aborted=result.aborted,
                iterations=result.iterations,
                rounds=result.rounds,
                final_feature_error=result.final_feature_error,
                final_coordinates=tuple(float(x) for x in robot.state.coordinates),
                wall_time_s=time.perf_counter() - start,
                trajectory=result.trajectory,
            )
            _oracle_errors(record, spec, box.scene.with_robot_coordinates(robot.state.coordinates), result)
            records.append(record)

    stats = _aggregate(scenario, records)
    return RunReport(
        scenario=scenario.name,
        seed=scenario.seed,
        repeats=repeats,
        notes=(ORACLE_NOTE,),
        config=scenario.to_dict(),
        records=records,
        stats=stats,
    )


def _mean_std(values):
    if not values:
        return None, None
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def _aggregate(scenario: Scenario, records: list[TaskRecord]) -> list[TaskStats]:
    stats = []
    for spec in scenario.tasks:
        rows = [r for r in records if r.task == spec.name]
        if not rows:
            continue
        pos_mean, pos_std = _mean_std([r.oracle_position_error_m for r in rows if r.oracle_position_error_m is not None])
        ang_mean, ang_std = _mean_std([r.oracle_angle_error_deg for r in rows if r.oracle_angle_error_deg is not None])
        h_mean, h_std = _mean_std([r.oracle_height_m for r in rows if r.oracle_height_m is not None])
        conds = [r.condition_number for r in rows if r.condition_number is not None]
        stats.append(TaskStats(
            task=spec.name,
            kind=spec.kind,
            repeats=len(rows),
            converged_count=sum(r.converged for r in rows),
            success_count=sum(r.task_success for r in rows),
            iterations_mean=float(np.mean([r.iterations for r in rows])),
            feature_error_mean=float(np.mean([r.final_feature_error for r in rows])),
            position_error_mean=pos_mean,
            position_error_std=pos_std,
            angle_error_mean=ang_mean,
            angle_error_std=ang_std,
            height_mean=h_mean,
            height_std=h_std,
            condition_number_mean=float(np.mean(conds)) if conds else None,
            wall_time_mean_s=float(np.mean([r.wall_time_s for r in rows])),
        ))
    return stats


def sweep_camera_angle(scenario: Scenario, angles_deg, repeats: int | None = None) -> list[RunReport]:
    """Run the scenario once per camera separation angle, re-placing camera 1
    on the scenario's camera ring. One report per grid point, tagged with its
    angle; per-repeat seeds are shared across angles."""
    reports = []
    for angle in angles_deg:
        if not 0.0 < float(angle) < 180.0:
            raise ScenarioError(f"sweep angle must lie in (0, 180) degrees, got {angle}")
        report = run_scenario(with_camera_angle(scenario, float(angle)), repeats)
        report.sweep_key = {"camera_angle_deg": float(angle)}
        reports.append(report)
    return reports


def run_exp1_sequence(scenario: Scenario, repeats: int | None = None) -> RunReport:
    """Run the three-step bench calibration: point servo to the cone vertex,
    point servo to the blade center, then the shadow descent; the report
    carries the stored coordinates of each step."""
    for target in ("cone_vertex", "blade_center"):
        if target not in scenario.scene.targets:
            raise ScenarioError(f"exp1 sequence needs target {target!r} in the scene")
    if scenario.scene.light_direction is None:
        raise ScenarioError("exp1 sequence needs scene.light_direction for the shadow step")
    kinds = [t.kind for t in scenario.tasks]
    targets = [t.target for t in scenario.tasks if t.kind == "position"]
    if "cone_vertex" not in targets or "blade_center" not in targets or "shadow" not in kinds:
        raise ScenarioError(
            "exp1 sequence needs position tasks for cone_vertex and blade_center and a shadow task"
        )
    return run_scenario(scenario, repeats)


# --- report emission -------------------------------------------------------------


def _plain(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _fmt(x: float) -> str:
    return repr(float(x))


def _record_dict(r: TaskRecord) -> dict:
    return {
        "task": r.task,
        "kind": r.kind,
        "repeat": r.repeat,
        "converged": r.converged,
        "aborted": r.aborted,
        "iterations": r.iterations,
        "rounds": r.rounds,
        "final_feature_error": r.final_feature_error,
        "final_coordinates": list(r.final_coordinates),
        "oracle_position_error_m": r.oracle_position_error_m,
        "oracle_angle_error_deg": r.oracle_angle_error_deg,
        "oracle_height_m": r.oracle_height_m,
        "condition_number": r.condition_number,
        "jacobian_drift": r.jacobian_drift,
        "task_success": r.task_success,
    }


def _stats_dict(s: TaskStats) -> dict:
    return {
        "task": s.task,
        "kind": s.kind,
        "repeats": s.repeats,
        "converged_count": s.converged_count,
        "success_count": s.success_count,
        "failure_rate": s.failure_rate,
        "iterations_mean": s.iterations_mean,
        "feature_error_mean": s.feature_error_mean,
        "position_error_mean": s.position_error_mean,
        "position_error_std": s.position_error_std,
        "angle_error_mean": s.angle_error_mean,
        "angle_error_std": s.angle_error_std,
        "height_mean": s.height_mean,
        "height_std": s.height_std,
        "condition_number_mean": s.condition_number_mean,
    }


_STATS_COLUMNS = list(_stats_dict(TaskStats("", "", 1, 0, 0, 0.0, 0.0)).keys())


def emit_report(report: RunReport, format: str, path, *, include_timings: bool = False) -> list[Path]:
    """Write the summary (CSV or JSON) plus one trajectory CSV per task and
    repeat into `path`. Output is byte-stable for identical runs and seeds;
    wall-clock fields are included only on request since they break that.
    Returns the written file paths."""
    if format not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {format!r}")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    suffix = ""
    if report.sweep_key:
        suffix = "_" + "_".join(f"{k}_{v:g}" for k, v in sorted(report.sweep_key.items()))

    if format == "json":
        payload = {
            "scenario": report.scenario,
            "seed": report.seed,
            "repeats": report.repeats,
            "notes": list(report.notes),
            "sweep_key": report.sweep_key,
            "all_converged": report.all_converged,
            "tasks": [_plain(_stats_dict(s)) for s in report.stats],
            "records": [_plain(_record_dict(r)) for r in report.records],
            "config": _plain(report.config),
        }
        if include_timings:
            payload["wall_time_mean_s"] = {s.task: s.wall_time_mean_s for s in report.stats}
        target = out / f"summary{suffix}.json"
        target.write_text(json.dumps(payload, indent=2) + "\n")
        written.append(target)
    else:
        lines = [",".join(_STATS_COLUMNS + (["wall_time_mean_s"] if include_timings else []))]
        for s in report.stats:
            row = _stats_dict(s)
            cells = []
            for col in _STATS_COLUMNS:
                v = row[col]
                if v is None:
                    cells.append("")
                elif isinstance(v, float):
                    cells.append(_fmt(v))
                else:
                    cells.append(str(v))
            if include_timings:
                cells.append(_fmt(s.wall_time_mean_s))
            lines.append(",".join(cells))
        target = out / f"summary{suffix}.csv"
        target.write_text("\n".join(lines) + "\n")
        written.append(target)

    for record in report.records:
        if not record.trajectory:
            continue
        m = len(record.trajectory[0].state.coordinates)
        k = record.trajectory[0].features.values.size
        header = (
            ["iteration"]
            + [f"r{i}" for i in range(m)]
            + [f"f{i}" for i in range(k)]
            + ["feature_error", "jacobian_residual"]
            + (["wall_time_s"] if include_timings else [])
        )
        lines = [",".join(header)]
        for i, point in enumerate(record.trajectory):
            cells = [str(i)]
            cells += [_fmt(x) for x in point.state.coordinates]
            cells += [_fmt(x) for x in point.features.values]
            cells += [_fmt(point.feature_error), _fmt(point.jacobian_residual)]
            if include_timings:
                cells.append(_fmt(point.wall_time))
            lines.append(",".join(cells))
        target = out / f"trajectory_{record.task}_r{record.repeat}{suffix}.csv"
        target.write_text("\n".join(lines) + "\n")
        written.append(target)
    return written
