"""Resolved-rate visual servo loops on tracked image Jacobians.

Each loop owns its robot mutably for its duration and sees the world only
through an observation callable (coordinate vector in, Observation out), so
the controller never touches ground truth. Goals may be given statically
(pixels / angles captured once) or by feature name, in which case they are
re-detected every iteration; re-detection is what makes the loops robust to
cameras or targets moving mid-servo.
"""

import time
from dataclasses import dataclass, field
from dataclasses import replace as _replace

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateGeometryError,
    DegenerateProjectionError,
    InitializationFailedError,
    RankDeficientError,
    StepFailedError,
)
from .features import (
    ORIENTATION,
    POSITION,
    SHADOW_DISTANCE,
    FeatureVector,
    image_angle,
    orientation_features,
    position_features,
    shadow_feature,
    stack_point_features,
)
from .jacobian import (
    EstimatorConfig,
    ImageJacobian,
    _pinv_from_svd,
    init_finite_difference,
    update,
)
from .world import ARM5, CARTESIAN3, JointLimits, RobotState

_FEATURE_LOST = (BehindCameraError, DegenerateGeometryError, DegenerateProjectionError)

# Anti-parallel orientation starts sit on a stationary point of the energy;
# break them with one small angular kick before bootstrapping the Jacobian.
_SADDLE_EPS = 1e-6
_KICK_ANGLE = 0.02


@dataclass(frozen=True)
class ReinitPolicy:
    """When to re-bootstrap the Jacobian by finite differences.

    `residual_threshold` / `max_age` fall back to the estimator config when
    left as None.
    """

    on_start: bool = True
    residual_threshold: float | None = None
    max_age: int | None = None


@dataclass
class ServoTask:
    """Goal, gain, tolerances, and iteration/step budgets of one servo run.

    `goal_smoothing` is the exponential-moving-average weight applied to
    re-detected goal features (1.0 uses each raw detection as-is); goals are
    quasi-static, so averaging their detections attenuates noise while still
    tracking cameras or targets that move mid-servo.
    """

    goal: FeatureVector | None = None
    gain: float = 0.3
    feature_tolerance: float = 1.0
    max_iterations: int = 500
    step_limit: float | np.ndarray = 2e-3
    reinit_policy: ReinitPolicy = field(default_factory=ReinitPolicy)
    goal_smoothing: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gain <= 1.0:
            raise ValueError("gain must lie in (0, 1]")
        if self.feature_tolerance <= 0:
            raise ValueError("feature_tolerance must be positive")
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be positive")
        if np.any(np.asarray(self.step_limit) <= 0):
            raise ValueError("step_limit must be positive")
        if not 0.0 < self.goal_smoothing <= 1.0:
            raise ValueError("goal_smoothing must lie in (0, 1]")


@dataclass(frozen=True)
class TrajectoryPoint:
    state: RobotState
    features: FeatureVector
    jacobian_residual: float
    feature_error: float
    goal_values: np.ndarray
    wall_time: float = 0.0


@dataclass
class ServoResult:
    converged: bool
    iterations: int
    final_feature_error: float
    trajectory: list[TrajectoryPoint]
    aborted: str | None = None
    reinit_count: int = 0
    initial_jacobian: ImageJacobian | None = None
    final_jacobian: ImageJacobian | None = None
    rounds: int | None = None
    sub_results: list["ServoResult"] | None = None

    @property
    def final_state(self) -> RobotState:
        return self.trajectory[-1].state


class Robot:
    """Mutable holder for the commanded robot state and its joint limits."""

    def __init__(self, state: RobotState, limits: JointLimits):
        if limits.lower.size != state.dof:
            raise ValueError("limits do not match the robot's degrees of freedom")
        self.state = state
        self.limits = limits


def _active_coords(kind: str, task_type: str) -> np.ndarray:
    if task_type == POSITION:
        return np.arange(3)
    if task_type == ORIENTATION:
        if kind != ARM5:
            raise ValueError(f"{kind} has no orientation coordinates")
        return np.arange(3, 5)
    if task_type == SHADOW_DISTANCE:
        return np.array([2])
    raise ValueError(f"unknown task type {task_type!r}")


def _clamped_step(matrix: np.ndarray, error: np.ndarray, gain: float, step_limit, svd_cutoff: float) -> np.ndarray:
    k, m = matrix.shape
    if k < m:
        raise ValueError(f"need features >= coordinates, got shape {k}x{m}")
    try:
        pinv, _, _ = _pinv_from_svd(matrix, svd_cutoff)
    except RankDeficientError as exc:
        raise StepFailedError(f"Jacobian is rank-deficient: {exc}") from exc
    dr = gain * (pinv @ error)
    limits = np.broadcast_to(np.asarray(step_limit, dtype=float), dr.shape)
    scale = float(np.max(np.abs(dr) / limits))
    if scale > 1.0:
        # Scale the whole vector so clamping preserves the commanded direction.
        dr = dr / scale
    return dr


def control_step(J: ImageJacobian, f_now: FeatureVector, task: ServoTask, config: EstimatorConfig | None = None) -> np.ndarray:
    """One resolved-rate step: gain times the pseudo-inverse applied to the
    feature error, scaled down if any component exceeds the step limit."""
    if task.goal is None:
        raise ValueError("task has no goal")
    if f_now.kind != task.goal.kind:
        raise ValueError(f"feature kind {f_now.kind!r} does not match goal kind {task.goal.kind!r}")
    if f_now.values.size != J.shape[0]:
        raise ValueError("feature vector does not match the Jacobian row count")
    cfg = config or EstimatorConfig()
    return _clamped_step(J.matrix, task.goal.values - f_now.values, task.gain, task.step_limit, cfg.svd_cutoff)


def _error_norm(kind: str, residual: np.ndarray) -> float:
    # Orientation converges when every energy is within tolerance of zero;
    # point and shadow features use the Euclidean error.
    if kind == ORIENTATION:
        return float(np.max(np.abs(residual)))
    return float(np.linalg.norm(residual))


def _result(converged, iterations, err, traj, J0, J, reinits, aborted=None):
    return ServoResult(
        converged=converged,
        iterations=iterations,
        final_feature_error=err,
        trajectory=traj,
        aborted=aborted,
        reinit_count=reinits,
        initial_jacobian=J0,
        final_jacobian=J,
    )


def _servo_loop(measure, robot: Robot, active: np.ndarray, task: ServoTask, config: EstimatorConfig,
                kind: str, *, allow_kick: bool = False, step_hook=None) -> ServoResult:
    r = robot.state.coordinates.copy()
    fvec, goal = measure(r)
    err = _error_norm(kind, goal - fvec.values)
    start = time.perf_counter()
    traj = [TrajectoryPoint(robot.state, fvec, 0.0, err, goal.copy())]
    iterations = 0
    reinits = 0

    if allow_kick and np.all(fvec.values <= -2.0 + _SADDLE_EPS):
        kick = np.minimum(np.broadcast_to(np.asarray(task.step_limit, dtype=float), active.shape), _KICK_ANGLE)
        r = r.copy()
        r[active] += kick
        if not robot.limits.contains(r):
            return _result(False, iterations, err, traj, None, None, reinits, aborted="stationary-gradient")
        robot.state = RobotState(r, robot.state.model_kind)
        iterations += 1
        fvec, goal = measure(r)
        err = _error_norm(kind, goal - fvec.values)
        traj.append(TrajectoryPoint(robot.state, fvec, 0.0, err, goal.copy(), time.perf_counter() - start))
        if np.all(fvec.values <= -2.0 + _SADDLE_EPS):
            return _result(False, iterations, err, traj, None, None, reinits, aborted="stationary-gradient")

    if err <= task.feature_tolerance:
        return _result(True, iterations, err, traj, None, None, reinits)

    def probe(ra):
        rp = r.copy()
        rp[active] = ra
        return measure(rp)[0].values

    fd = np.asarray(config.fd_step, dtype=float)
    probe_config = config if fd.ndim == 0 else _replace(config, fd_step=fd[active])

    def bootstrap():
        return init_finite_difference(probe, r[active], probe_config)

    try:
        J = bootstrap()
    except InitializationFailedError as exc:
        return _result(False, iterations, err, traj, None, None, reinits, aborted=f"init-failed: {exc}")
    initial_J = J

    policy = task.reinit_policy
    residual_threshold = (
        policy.residual_threshold if policy.residual_threshold is not None else config.reinit_residual_threshold
    )
    max_age = policy.max_age if policy.max_age is not None else config.max_age

    step_failed = False
    while iterations < task.max_iterations:
        iterations += 1
        try:
            dr = _clamped_step(J.matrix, goal - fvec.values, task.gain, task.step_limit, config.svd_cutoff)
        except StepFailedError as exc:
            if step_failed:
                return _result(False, iterations, err, traj, initial_J, J, reinits, aborted=f"step-failed: {exc}")
            step_failed = True
            try:
                J = bootstrap()
                reinits += 1
            except InitializationFailedError as exc2:
                return _result(False, iterations, err, traj, initial_J, J, reinits, aborted=f"init-failed: {exc2}")
            continue
        step_failed = False
        r_new = r.copy()
        r_new[active] += dr
        if not robot.limits.contains(r_new):
            return _result(False, iterations, err, traj, initial_J, J, reinits, aborted="joint-limit")
        r = r_new
        robot.state = RobotState(r, robot.state.model_kind)
        if step_hook is not None:
            step_hook(iterations)
        try:
            f_new, goal_new = measure(r)
        except _FEATURE_LOST as exc:
            return _result(False, iterations, err, traj, initial_J, J, reinits, aborted=f"feature-lost: {exc}")
        J = update(J, dr, f_new.values - fvec.values, config)
        if residual_threshold is not None and J.last_residual > residual_threshold:
            try:
                J = bootstrap()
                reinits += 1
            except InitializationFailedError as exc:
                return _result(False, iterations, err, traj, initial_J, J, reinits, aborted=f"init-failed: {exc}")
        elif max_age is not None and J.age >= max_age:
            try:
                J = bootstrap()
                reinits += 1
            except InitializationFailedError as exc:
                return _result(False, iterations, err, traj, initial_J, J, reinits, aborted=f"init-failed: {exc}")
        fvec, goal = f_new, goal_new
        err = _error_norm(kind, goal - fvec.values)
        traj.append(TrajectoryPoint(robot.state, fvec, J.last_residual, err, goal.copy(), time.perf_counter() - start))
        if err <= task.feature_tolerance:
            return _result(True, iterations, err, traj, initial_J, J, reinits)

    return _result(False, iterations, err, traj, initial_J, J, reinits)


# --- measurement builders -----------------------------------------------------


def _position_measure(sense, target, point: str, smoothing: float = 1.0):
    static_goal = None
    if not isinstance(target, str):
        static_goal = stack_point_features(np.asarray(target, dtype=float)).values
    state = {"goal": None}

    def measure(r):
        obs = sense(r)
        fvec = position_features(obs, point)
        if static_goal is not None:
            return fvec, static_goal
        raw = stack_point_features([cam.points[target] for cam in obs.cameras]).values
        if state["goal"] is None or smoothing >= 1.0:
            state["goal"] = raw
        else:
            state["goal"] = (1.0 - smoothing) * state["goal"] + smoothing * raw
        return fvec, state["goal"].copy()

    return measure


def _orientation_measure(sense, goal, tool_axes: tuple[str, ...], smoothing: float = 1.0):
    goal_names = None
    static_angles = None
    if isinstance(goal, (tuple, list)) and goal and isinstance(goal[0], str):
        goal_names = tuple(goal)
        if len(goal_names) != len(tool_axes):
            raise ValueError("need one goal axis name per tracked tool axis")
    else:
        static_angles = np.asarray(goal, dtype=float)
    # Goal directions are averaged as unit vectors (circular-safe), then read
    # back as angles.
    state = {"dirs": None}

    def measure(r):
        obs = sense(r)
        if goal_names is not None:
            raw = np.array([[cam.directions[g] for g in goal_names] for cam in obs.cameras])
            if state["dirs"] is None or smoothing >= 1.0:
                state["dirs"] = raw
            else:
                blended = (1.0 - smoothing) * state["dirs"] + smoothing * raw
                norms = np.linalg.norm(blended, axis=-1, keepdims=True)
                state["dirs"] = blended / np.maximum(norms, 1e-12)
            angles = np.arctan2(state["dirs"][..., 1], state["dirs"][..., 0])
        else:
            angles = static_angles
        fvec = orientation_features(obs, tool_axes, angles)
        return fvec, np.zeros(fvec.values.size)

    return measure


def _shadow_measure(sense, side_camera: int):
    def measure(r):
        fvec = shadow_feature(sense(r), side_camera)
        return fvec, np.zeros(1)

    return measure


# --- public runners -------------------------------------------------------------


def run_position_servo(sense, robot: Robot, target, task: ServoTask, config: EstimatorConfig,
                       *, point: str = "tool_tip", step_hook=None, _measure=None) -> ServoResult:
    """Servo the tracked point's stacked pixels onto the target pixels.

    `target` is either an (n_cameras, 2) array of goal pixels captured once,
    or the name of an observed point that is re-detected every iteration.
    Only the translational coordinates move.
    """
    measure = _measure or _position_measure(sense, target, point, task.goal_smoothing)
    active = _active_coords(robot.state.model_kind, POSITION)
    return _servo_loop(measure, robot, active, task, config, POSITION, step_hook=step_hook)


def run_orientation_servo(sense, robot: Robot, goal, task: ServoTask, config: EstimatorConfig,
                          *, tool_axes: tuple[str, ...] = ("tool_shaft",), step_hook=None, _measure=None) -> ServoResult:
    """Align tracked tool axes with goal image angles using energy features.

    `goal` is either an (n_cameras, n_axes) array of target image angles, or
    a tuple of observed target-axis names (re-detected every iteration). The
    goal feature vector is always zero; convergence requires every energy to
    be within tolerance of zero. Only the orientation coordinates move.
    """
    measure = _measure or _orientation_measure(sense, goal, tool_axes, task.goal_smoothing)
    active = _active_coords(robot.state.model_kind, ORIENTATION)
    return _servo_loop(measure, robot, active, task, config, ORIENTATION, allow_kick=True, step_hook=step_hook)


def run_shadow_servo(sense, robot: Robot, side_camera: int, task: ServoTask, config: EstimatorConfig,
                     *, step_hook=None) -> ServoResult:
    """Descend the vertical coordinate until the tip-to-shadow pixel distance
    in the side camera falls within tolerance."""
    measure = _shadow_measure(sense, side_camera)
    active = _active_coords(robot.state.model_kind, SHADOW_DISTANCE)
    return _servo_loop(measure, robot, active, task, config, SHADOW_DISTANCE, step_hook=step_hook)


def run_pose_servo(sense, robot: Robot, position_target, orientation_goal,
                   position_task: ServoTask, orientation_task: ServoTask, config: EstimatorConfig,
                   *, point: str = "tool_tip", tool_axes: tuple[str, ...] = ("tool_shaft",),
                   max_rounds: int = 8, step_hook=None) -> ServoResult:
    """Alternate position and orientation servos (position first) until both
    goals hold simultaneously or the round budget runs out.

    Position and orientation drive disjoint coordinates, but orienting the
    tool displaces its tip, so rounds repeat until a fresh measurement shows
    both errors inside their tolerances in the same round.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    pos_measure = _position_measure(sense, position_target, point, position_task.goal_smoothing)
    ori_measure = _orientation_measure(sense, orientation_goal, tool_axes, orientation_task.goal_smoothing)
    sub_results: list[ServoResult] = []
    trajectory: list[TrajectoryPoint] = []
    total_iterations = 0
    converged = False
    aborted = None
    pos_err = float("inf")
    last_pos: ServoResult | None = None

    def offset_hook(base):
        if step_hook is None:
            return None
        return lambda i: step_hook(base + i)

    rounds = 0
    while rounds < max_rounds:
        rounds += 1
        pos_res = run_position_servo(sense, robot, position_target, position_task, config,
                                     point=point, step_hook=offset_hook(total_iterations),
                                     _measure=pos_measure)
        sub_results.append(pos_res)
        last_pos = pos_res
        trajectory.extend(pos_res.trajectory)
        total_iterations += pos_res.iterations
        if pos_res.aborted:
            aborted = f"position-round: {pos_res.aborted}"
            pos_err = pos_res.final_feature_error
            break
        ori_res = run_orientation_servo(sense, robot, orientation_goal, orientation_task, config,
                                        tool_axes=tool_axes, step_hook=offset_hook(total_iterations),
                                        _measure=ori_measure)
        sub_results.append(ori_res)
        trajectory.extend(ori_res.trajectory)
        total_iterations += ori_res.iterations
        if ori_res.aborted:
            aborted = f"orientation-round: {ori_res.aborted}"
            pos_err = pos_res.final_feature_error
            break
        fvec, goal = pos_measure(robot.state.coordinates)
        pos_err = _error_norm(POSITION, goal - fvec.values)
        ovec, ogoal = ori_measure(robot.state.coordinates)
        ori_err = _error_norm(ORIENTATION, ogoal - ovec.values)
        if (pos_err <= position_task.feature_tolerance and ori_err <= orientation_task.feature_tolerance
                and pos_res.converged and ori_res.converged):
            converged = True
            break

    return ServoResult(
        converged=converged,
        iterations=total_iterations,
        final_feature_error=pos_err,
        trajectory=trajectory,
        aborted=aborted,
        reinit_count=sum(s.reinit_count for s in sub_results),
        initial_jacobian=last_pos.initial_jacobian if last_pos else None,
        final_jacobian=last_pos.final_jacobian if last_pos else None,
        rounds=rounds,
        sub_results=sub_results,
    )
