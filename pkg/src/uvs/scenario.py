"""Scenario files: a single YAML document describing the scene, the task
sequence, optional disturbances, and an optional camera-angle sweep grid.

The loader validates everything up front, fills defaults, and keeps the fully
resolved configuration on the Scenario so reports can echo exactly what ran.
See README.md for the documented grammar; packaged examples live under
``uvs/scenarios/``.
"""

import copy
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ScenarioError
from .geometry import Plane, RigidTransform, look_at_pose, rotation_about_axis, rotation_about_point
from .jacobian import EstimatorConfig
from .servo import ReinitPolicy, ServoTask
from .world import (
    ARM5,
    CARTESIAN3,
    CameraModel,
    Disturbance,
    JointLimits,
    RobotState,
    Scene,
    TargetAxis,
    ToolGeometry,
)

_TASK_KINDS = ("position", "orientation", "pose", "shadow", "move")

_SETTING_DEFAULTS = {
    "position": {"gain": 0.3, "tolerance": 1.0, "max_iterations": 500, "step_limit": 2e-3, "goal_smoothing": 0.3},
    "orientation": {"gain": 0.3, "tolerance": 1e-3, "max_iterations": 500, "step_limit": 0.01, "goal_smoothing": 0.3},
    "shadow": {"gain": 0.3, "tolerance": 1.0, "max_iterations": 500, "step_limit": 2e-3, "goal_smoothing": 1.0},
}

_CAMERA_DEFAULTS = {
    "up": [0.0, 0.0, 1.0],
    "focal": [2400.0, 2400.0],
    "image_size": [1920.0, 1080.0],
    "k1": 0.0,
    "noise_sigma": 0.0,
}


def _fail(path: str, message: str) -> ScenarioError:
    return ScenarioError(f"{path}: {message}")


def _require(mapping, key, path):
    if not isinstance(mapping, dict) or key not in mapping:
        raise _fail(path, f"missing required field {key!r}")
    return mapping[key]


def _vec(value, n, path):
    try:
        v = [float(x) for x in value]
    except (TypeError, ValueError):
        raise _fail(path, f"expected a sequence of {n} numbers") from None
    if len(v) != n:
        raise _fail(path, f"expected {n} numbers, got {len(v)}")
    return v


@dataclass(frozen=True)
class ServoSettings:
    gain: float
    tolerance: float
    max_iterations: int
    step_limit: float
    goal_smoothing: float = 1.0
    reinit_residual: float | None = None
    reinit_age: int | None = None

    def to_task(self) -> ServoTask:
        return ServoTask(
            goal=None,
            gain=self.gain,
            feature_tolerance=self.tolerance,
            max_iterations=self.max_iterations,
            step_limit=self.step_limit,
            reinit_policy=ReinitPolicy(
                on_start=True,
                residual_threshold=self.reinit_residual,
                max_age=self.reinit_age,
            ),
            goal_smoothing=self.goal_smoothing,
        )


@dataclass(frozen=True)
class TaskSpec:
    """One task in a scenario's sequence.

    `success_tolerance_m` / `success_tolerance_deg` are optional physical
    task requirements (e.g. the engagement radius within which a driver tip
    can seat a screw). They are scored by the ground-truth oracle in reports
    and define task success; the controller itself never sees them.
    """

    name: str
    kind: str
    target: str | None = None
    goal_axes: tuple[str, ...] = ()
    tool_axes: tuple[str, ...] = ("tool_shaft",)
    settings: ServoSettings | None = None
    position_settings: ServoSettings | None = None
    orientation_settings: ServoSettings | None = None
    max_rounds: int = 6
    side_camera: int = 1
    coordinates: tuple[float, ...] | None = None
    success_tolerance_m: float | None = None
    success_tolerance_deg: float | None = None


@dataclass(frozen=True)
class DisturbanceSpec:
    """A scheduled rigid motion of one entity, applied before the observation
    of the given global control iteration."""

    iteration: int
    entity: str
    translate: tuple[float, float, float] | None = None
    rotate_deg: float | None = None
    rotate_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    about: str = "world"

    def resolve(self, scene: Scene) -> Disturbance:
        if self.rotate_deg is not None:
            rot = rotation_about_axis(np.asarray(self.rotate_axis), math.radians(self.rotate_deg))
            if self.about == "center":
                kind, _, name = self.entity.partition(":")
                if kind == "camera":
                    center = scene.cameras[int(name)].pose.inverse().translation
                elif kind == "target":
                    center = scene.targets[name]
                else:
                    center = np.zeros(3)
                transform = rotation_about_point(rot, center)
            else:
                transform = RigidTransform(rot, np.zeros(3))
        else:
            transform = RigidTransform(np.eye(3), np.asarray(self.translate, dtype=float))
        return Disturbance(self.entity, transform)


@dataclass(frozen=True)
class CameraRing:
    """Cameras on a horizontal circle about the workspace, all looking at its
    center; the sweep machinery re-places camera 1 on this ring."""

    center: tuple[float, float, float]
    radius: float
    height: float
    angles_deg: tuple[float, ...]
    focal: tuple[float, float]
    principal_point: tuple[float, float]
    image_size: tuple[float, float]
    k1: float = 0.0
    noise_sigma: float = 0.0

    def camera(self, angle_deg: float) -> CameraModel:
        phi = math.radians(angle_deg)
        center = np.asarray(self.center, dtype=float)
        eye = center + np.array([self.radius * math.cos(phi), self.radius * math.sin(phi), self.height])
        return CameraModel(
            pose=look_at_pose(eye, center),
            focal=np.asarray(self.focal, dtype=float),
            principal_point=np.asarray(self.principal_point, dtype=float),
            image_size=np.asarray(self.image_size, dtype=float),
            radial_distortion=self.k1,
            pixel_noise_sigma=self.noise_sigma,
        )


@dataclass
class Scenario:
    name: str
    seed: int
    repeats: int
    scene: Scene
    estimator: EstimatorConfig
    tasks: tuple[TaskSpec, ...]
    disturbances: tuple[DisturbanceSpec, ...] = ()
    sweep_angles_deg: tuple[float, ...] | None = None
    camera_ring: CameraRing | None = None
    resolved: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """The fully resolved configuration (inputs plus filled defaults)."""
        return copy.deepcopy(self.resolved)


# --- builders -------------------------------------------------------------------


def _build_settings(raw: dict, defaults: dict, path: str) -> ServoSettings:
    known = {"gain", "tolerance", "max_iterations", "step_limit", "goal_smoothing", "reinit_residual", "reinit_age"}
    for key in raw:
        if key not in known:
            raise _fail(path, f"unknown setting {key!r}")
    merged = {**defaults, **raw}
    raw.update(merged)
    try:
        return ServoSettings(
            gain=float(merged["gain"]),
            tolerance=float(merged["tolerance"]),
            max_iterations=int(merged["max_iterations"]),
            step_limit=float(merged["step_limit"]),
            goal_smoothing=float(merged.get("goal_smoothing", 1.0)),
            reinit_residual=None if merged.get("reinit_residual") is None else float(merged["reinit_residual"]),
            reinit_age=None if merged.get("reinit_age") is None else int(merged["reinit_age"]),
        )
    except (TypeError, ValueError) as exc:
        raise _fail(path, str(exc)) from None


def _build_camera(raw: dict, path: str) -> CameraModel:
    for key, default in _CAMERA_DEFAULTS.items():
        raw.setdefault(key, copy.deepcopy(default))
    raw.setdefault("principal_point", [s / 2.0 for s in _vec(raw["image_size"], 2, f"{path}.image_size")])
    position = _vec(_require(raw, "position", path), 3, f"{path}.position")
    target = _vec(_require(raw, "look_at", path), 3, f"{path}.look_at")
    try:
        pose = look_at_pose(np.asarray(position), np.asarray(target), np.asarray(_vec(raw["up"], 3, f"{path}.up")))
        return CameraModel(
            pose=pose,
            focal=np.asarray(_vec(raw["focal"], 2, f"{path}.focal")),
            principal_point=np.asarray(_vec(raw["principal_point"], 2, f"{path}.principal_point")),
            image_size=np.asarray(_vec(raw["image_size"], 2, f"{path}.image_size")),
            radial_distortion=float(raw["k1"]),
            pixel_noise_sigma=float(raw["noise_sigma"]),
        )
    except ValueError as exc:
        raise _fail(path, str(exc)) from None


def _build_ring(raw: dict, path: str) -> CameraRing:
    for key in ("focal", "image_size", "k1", "noise_sigma"):
        raw.setdefault(key, copy.deepcopy(_CAMERA_DEFAULTS[key]))
    raw.setdefault("principal_point", [s / 2.0 for s in _vec(raw["image_size"], 2, f"{path}.image_size")])
    angles = _require(raw, "angles_deg", path)
    if not isinstance(angles, list) or len(angles) < 2:
        raise _fail(f"{path}.angles_deg", "need at least two ring angles")
    return CameraRing(
        center=tuple(_vec(_require(raw, "center", path), 3, f"{path}.center")),
        radius=float(_require(raw, "radius", path)),
        height=float(_require(raw, "height", path)),
        angles_deg=tuple(float(a) for a in angles),
        focal=tuple(_vec(raw["focal"], 2, f"{path}.focal")),
        principal_point=tuple(_vec(raw["principal_point"], 2, f"{path}.principal_point")),
        image_size=tuple(_vec(raw["image_size"], 2, f"{path}.image_size")),
        k1=float(raw["k1"]),
        noise_sigma=float(raw["noise_sigma"]),
    )


def _build_scene(raw: dict, path: str = "scene") -> tuple[Scene, CameraRing | None]:
    robot_raw = _require(raw, "robot", path)
    kind = _require(robot_raw, "kind", f"{path}.robot")
    if kind not in (CARTESIAN3, ARM5):
        raise _fail(f"{path}.robot.kind", f"must be {CARTESIAN3!r} or {ARM5!r}, got {kind!r}")
    dof = 3 if kind == CARTESIAN3 else 5
    coords = _vec(_require(robot_raw, "coordinates", f"{path}.robot"), dof, f"{path}.robot.coordinates")
    limits_raw = _require(robot_raw, "limits", f"{path}.robot")
    limits = JointLimits(
        np.asarray(_vec(_require(limits_raw, "lower", f"{path}.robot.limits"), dof, f"{path}.robot.limits.lower")),
        np.asarray(_vec(_require(limits_raw, "upper", f"{path}.robot.limits"), dof, f"{path}.robot.limits.upper")),
    )

    tool_raw = _require(raw, "tool", path)
    tool_raw.setdefault("basis_u", [1.0, 0.0, 0.0])
    tool_raw.setdefault("basis_v", [0.0, 1.0, 0.0])
    tool_raw.setdefault("shaft_marker", [x / 2.0 for x in _vec(_require(tool_raw, "tip", f"{path}.tool"), 3, f"{path}.tool.tip")])
    try:
        tool = ToolGeometry(
            tip=np.asarray(_vec(tool_raw["tip"], 3, f"{path}.tool.tip")),
            shaft=np.asarray(_vec(_require(tool_raw, "shaft", f"{path}.tool"), 3, f"{path}.tool.shaft")),
            shaft_marker=np.asarray(_vec(tool_raw["shaft_marker"], 3, f"{path}.tool.shaft_marker")),
            basis_u=np.asarray(_vec(tool_raw["basis_u"], 3, f"{path}.tool.basis_u")),
            basis_v=np.asarray(_vec(tool_raw["basis_v"], 3, f"{path}.tool.basis_v")),
        )
    except ValueError as exc:
        raise _fail(f"{path}.tool", str(exc)) from None

    targets = {}
    for name, value in (raw.get("targets") or {}).items():
        targets[str(name)] = np.asarray(_vec(value, 3, f"{path}.targets.{name}"))

    target_axes = {}
    for name, value in (raw.get("target_axes") or {}).items():
        axis_path = f"{path}.target_axes.{name}"
        direction = np.asarray(_vec(_require(value, "direction", axis_path), 3, f"{axis_path}.direction"))
        anchor = str(_require(value, "anchor", axis_path))
        if anchor not in targets:
            raise _fail(axis_path, f"anchor {anchor!r} is not a declared target")
        target_axes[str(name)] = TargetAxis(direction, anchor, float(value.setdefault("baseline", 0.02)))

    plane_raw = raw.setdefault("plane", {"point": [0.0, 0.0, 0.0], "normal": [0.0, 0.0, 1.0]})
    plane = Plane(
        np.asarray(_vec(_require(plane_raw, "point", f"{path}.plane"), 3, f"{path}.plane.point")),
        np.asarray(_vec(_require(plane_raw, "normal", f"{path}.plane"), 3, f"{path}.plane.normal")),
    )

    light = raw.setdefault("light_direction", None)
    light_vec = None if light is None else np.asarray(_vec(light, 3, f"{path}.light_direction"))

    ring = None
    cameras: list[CameraModel] = []
    if "camera_ring" in raw and raw["camera_ring"] is not None:
        ring = _build_ring(raw["camera_ring"], f"{path}.camera_ring")
        cameras.extend(ring.camera(a) for a in ring.angles_deg)
    for i, cam_raw in enumerate(raw.get("cameras") or []):
        cameras.append(_build_camera(cam_raw, f"{path}.cameras[{i}]"))
    if not cameras:
        raise _fail(f"{path}.cameras", "scene defines no cameras")

    try:
        scene = Scene(
            robot=RobotState(np.asarray(coords), kind),
            joint_limits=limits,
            tool=tool,
            targets=targets,
            cameras=tuple(cameras),
            plane=plane,
            light_direction=light_vec,
            target_axes=target_axes,
        )
    except ValueError as exc:
        raise _fail(path, str(exc)) from None
    return scene, ring


def _build_task(raw: dict, index: int, scene: Scene, dof: int) -> TaskSpec:
    path = f"tasks[{index}]"
    kind = _require(raw, "type", path)
    if kind not in _TASK_KINDS:
        raise _fail(f"{path}.type", f"must be one of {_TASK_KINDS}, got {kind!r}")
    name = str(raw.setdefault("name", f"task{index}"))

    if kind == "move":
        coords = _vec(_require(raw, "coordinates", path), dof, f"{path}.coordinates")
        return TaskSpec(name=name, kind=kind, coordinates=tuple(coords))

    if kind in ("position", "orientation", "shadow"):
        settings = _build_settings(raw.setdefault("settings", {}), _SETTING_DEFAULTS["shadow" if kind == "shadow" else kind], f"{path}.settings")
    else:
        settings = None

    if kind in ("position", "pose"):
        target = str(_require(raw, "target", path))
        if target not in scene.targets:
            raise _fail(f"{path}.target", f"{target!r} is not a scene target")
    else:
        target = None

    goal_axes: tuple[str, ...] = ()
    tool_axes: tuple[str, ...] = ("tool_shaft",)
    if kind in ("orientation", "pose"):
        axes_raw = raw.get("axes") or [raw.get("axis")]
        if axes_raw == [None]:
            raise _fail(path, "orientation tasks need 'axis' or 'axes'")
        goal_axes = tuple(str(a) for a in axes_raw)
        for a in goal_axes:
            if a not in scene.target_axes:
                raise _fail(path, f"goal axis {a!r} is not a scene target axis")
        tool_axes_raw = raw.setdefault("tool_axes", ["tool_shaft"] if len(goal_axes) == 1 else ["tool_u", "tool_v"])
        tool_axes = tuple(str(a) for a in tool_axes_raw)
        if len(tool_axes) != len(goal_axes):
            raise _fail(path, "tool_axes and goal axes must have equal length")

    success_m = raw.get("success_tolerance_m")
    success_deg = raw.get("success_tolerance_deg")
    success_m = None if success_m is None else float(success_m)
    success_deg = None if success_deg is None else float(success_deg)

    if kind == "pose":
        pos = _build_settings(raw.setdefault("position", {}), _SETTING_DEFAULTS["position"], f"{path}.position")
        ori = _build_settings(raw.setdefault("orientation", {}), _SETTING_DEFAULTS["orientation"], f"{path}.orientation")
        return TaskSpec(
            name=name, kind=kind, target=target, goal_axes=goal_axes, tool_axes=tool_axes,
            position_settings=pos, orientation_settings=ori, max_rounds=int(raw.setdefault("max_rounds", 6)),
            success_tolerance_m=success_m, success_tolerance_deg=success_deg,
        )

    if kind == "shadow":
        side = int(raw.setdefault("side_camera", 1))
        if not 0 <= side < len(scene.cameras):
            raise _fail(f"{path}.side_camera", f"camera index {side} out of range")
        if scene.light_direction is None:
            raise _fail(path, "shadow tasks need scene.light_direction")
        return TaskSpec(name=name, kind=kind, settings=settings, side_camera=side,
                        success_tolerance_m=success_m)

    return TaskSpec(name=name, kind=kind, target=target, goal_axes=goal_axes,
                    tool_axes=tool_axes, settings=settings,
                    success_tolerance_m=success_m, success_tolerance_deg=success_deg)


def scenario_from_dict(data: dict) -> Scenario:
    """Validate a raw scenario mapping, fill defaults, and build the Scenario."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario document must be a mapping")
    resolved = copy.deepcopy(data)
    name = str(resolved.setdefault("name", "scenario"))
    seed = int(resolved.setdefault("seed", 0))
    repeats = int(resolved.setdefault("repeats", 10))
    if repeats < 1:
        raise _fail("repeats", "must be at least 1")

    scene, ring = _build_scene(_require(resolved, "scene", "scenario"))
    dof = scene.robot.dof

    est_raw = resolved.setdefault("estimator", {})
    defaults = EstimatorConfig()
    est_raw.setdefault("fd_step", 1e-4)
    for key in ("lm_damping", "update_regularization", "svd_cutoff", "reinit_residual_threshold", "min_update_step"):
        est_raw.setdefault(key, getattr(defaults, key))
    est_raw.setdefault("max_age", None)
    fd = est_raw["fd_step"]
    fd_step = np.asarray([float(x) for x in fd]) if isinstance(fd, list) else float(fd)
    if isinstance(fd_step, np.ndarray) and fd_step.size != dof:
        raise _fail("estimator.fd_step", f"per-coordinate steps must have length {dof}")
    try:
        estimator = EstimatorConfig(
            fd_step=fd_step,
            lm_damping=float(est_raw["lm_damping"]),
            update_regularization=float(est_raw["update_regularization"]),
            svd_cutoff=float(est_raw["svd_cutoff"]),
            reinit_residual_threshold=float(est_raw["reinit_residual_threshold"]),
            max_age=None if est_raw["max_age"] is None else int(est_raw["max_age"]),
            min_update_step=float(est_raw["min_update_step"]),
        )
    except ValueError as exc:
        raise _fail("estimator", str(exc)) from None

    tasks_raw = resolved.setdefault("tasks", [])
    tasks = tuple(_build_task(t, i, scene, dof) for i, t in enumerate(tasks_raw))
    multi_view = any(t.kind in ("position", "orientation", "pose") for t in tasks)
    if multi_view and len(scene.cameras) < 2:
        raise _fail("scene.cameras", "multi-view tasks need at least two cameras")

    disturbances = []
    for i, d in enumerate(resolved.setdefault("disturbances", [])):
        path = f"disturbances[{i}]"
        iteration = int(_require(d, "iteration", path))
        if iteration < 0:
            raise _fail(f"{path}.iteration", "must be non-negative")
        entity = str(_require(d, "entity", path))
        kind, _, ename = entity.partition(":")
        if kind == "camera":
            if not ename.isdigit() or int(ename) >= len(scene.cameras):
                raise _fail(f"{path}.entity", f"unknown camera {ename!r}")
        elif kind == "target":
            if ename not in scene.targets:
                raise _fail(f"{path}.entity", f"unknown target {ename!r}")
        elif kind == "axis":
            if ename not in scene.target_axes:
                raise _fail(f"{path}.entity", f"unknown target axis {ename!r}")
        else:
            raise _fail(f"{path}.entity", f"unknown entity kind {kind!r}")
        translate = d.get("translate")
        rotate = d.get("rotate_deg")
        if (translate is None) == (rotate is None):
            raise _fail(path, "give exactly one of 'translate' or 'rotate_deg'")
        disturbances.append(DisturbanceSpec(
            iteration=iteration,
            entity=entity,
            translate=None if translate is None else tuple(_vec(translate, 3, f"{path}.translate")),
            rotate_deg=None if rotate is None else float(rotate),
            rotate_axis=tuple(_vec(d.setdefault("rotate_axis", [0.0, 0.0, 1.0]), 3, f"{path}.rotate_axis")),
            about=str(d.setdefault("about", "center" if kind == "camera" else "world")),
        ))

    sweep = resolved.get("sweep")
    sweep_angles = None
    if sweep is not None:
        angles = _require(sweep, "camera_angles_deg", "sweep")
        if not isinstance(angles, list) or not angles:
            raise _fail("sweep.camera_angles_deg", "must be a non-empty list")
        for a in angles:
            if not 0.0 < float(a) < 180.0:
                raise _fail("sweep.camera_angles_deg", f"angles must lie in (0, 180), got {a}")
        sweep_angles = tuple(float(a) for a in angles)

    return Scenario(
        name=name,
        seed=seed,
        repeats=repeats,
        scene=scene,
        estimator=estimator,
        tasks=tasks,
        disturbances=tuple(disturbances),
        sweep_angles_deg=sweep_angles,
        camera_ring=ring,
        resolved=resolved,
    )


def load_scenario(path) -> Scenario:
    """Load and validate a scenario YAML file."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ScenarioError(f"{path}: parse error{where}: {exc}") from exc
    try:
        return scenario_from_dict(data)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def builtin_scenario(name: str) -> Scenario:
    """Load one of the packaged scenarios ('exp1', 'exp2')."""
    ref = resources.files("uvs") / "scenarios" / f"{name}.yaml"
    if not ref.is_file():
        raise ScenarioError(f"no builtin scenario named {name!r}")
    with resources.as_file(ref) as p:
        return load_scenario(p)


def with_camera_angle(scenario: Scenario, angle_deg: float) -> Scenario:
    """Variant with the two ring cameras re-placed at `angle_deg` of
    separation, symmetric about the original pair's bisector (keeping the
    bisector fixed isolates the separation effect when sweeping)."""
    ring = scenario.camera_ring
    if ring is None:
        raise ScenarioError("camera-angle placement needs a scene.camera_ring")
    mid = 0.5 * (ring.angles_deg[0] + ring.angles_deg[1])
    angles = [mid - 0.5 * angle_deg, mid + 0.5 * angle_deg]
    cams = list(scenario.scene.cameras)
    cams[0] = ring.camera(angles[0])
    cams[1] = ring.camera(angles[1])
    scene = replace(scenario.scene, cameras=tuple(cams))
    resolved = copy.deepcopy(scenario.resolved)
    resolved["scene"]["camera_ring"]["angles_deg"] = angles
    return replace(scenario, scene=scene, resolved=resolved)


def _override_camera_field(scenario: Scenario, yaml_key: str, attr: str, value: float) -> Scenario:
    cams = tuple(replace(c, **{attr: value}) for c in scenario.scene.cameras)
    ring = scenario.camera_ring
    if ring is not None:
        ring = replace(ring, **{yaml_key: value})
    resolved = copy.deepcopy(scenario.resolved)
    if "camera_ring" in resolved.get("scene", {}) and resolved["scene"]["camera_ring"] is not None:
        resolved["scene"]["camera_ring"][yaml_key] = value
    for cam_raw in resolved.get("scene", {}).get("cameras") or []:
        cam_raw[yaml_key] = value
    return replace(scenario, scene=replace(scenario.scene, cameras=cams), camera_ring=ring, resolved=resolved)


def with_noise(scenario: Scenario, sigma: float) -> Scenario:
    """Variant with every camera's pixel noise set to `sigma`."""
    return _override_camera_field(scenario, "noise_sigma", "pixel_noise_sigma", sigma)


def with_distortion(scenario: Scenario, k1: float) -> Scenario:
    """Variant with every camera's radial distortion set to `k1`."""
    return _override_camera_field(scenario, "k1", "radial_distortion", k1)
