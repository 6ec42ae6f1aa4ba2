"""Ground-truth world model: robot kinematics, pinhole cameras, shadow
geometry, simulated observations, and disturbance injection.

The controller side never touches this module directly; it only sees the
per-camera pixel measurements produced by `observe`. Everything here is a
pure function of its inputs (noise generators are passed explicitly), so
concurrent use is safe.

Robot models:
  - ``cartesian3``: r = (x, y, z) tool translation, identity orientation.
  - ``arm5``: r = (x, y, z, pan, tilt); orientation is a pan about the world
    Z axis followed by a tilt about the panned Y axis, i.e. R = Rz(pan) Ry(tilt).
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import (
    BehindCameraError,
    DegenerateGeometryError,
    DegenerateProjectionError,
    JointLimitError,
)
from .features import (
    OrientationFeatureSpec,
    PositionFeatureSpec,
    ShadowFeatureSpec,
)
from .geometry import Plane, RigidTransform, _as_vec, _unit, rot_y, rot_z, rotation_about_point

CARTESIAN3 = "cartesian3"
ARM5 = "arm5"

# Length (meters) of the 3D segment whose projection defines an observed
# image-plane direction vector.
DIRECTION_SEGMENT = 1e-3

_TOOL_AXIS_NAMES = ("tool_shaft", "tool_u", "tool_v")


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera with a single radial distortion term and pixel noise.

    `pose` maps world to camera coordinates. These fields exist only on the
    simulator side; the controller treats each camera as an unknown map.
    """

    pose: RigidTransform
    focal: np.ndarray
    principal_point: np.ndarray
    image_size: np.ndarray
    radial_distortion: float = 0.0
    pixel_noise_sigma: float = 0.0

    def __post_init__(self):
        f = _as_vec(self.focal, 2, "focal")
        pp = _as_vec(self.principal_point, 2, "principal_point")
        size = _as_vec(self.image_size, 2, "image_size")
        if np.any(f <= 0):
            raise ValueError("focal components must be positive")
        if np.any(size <= 0):
            raise ValueError("image_size components must be positive")
        if self.pixel_noise_sigma < 0:
            raise ValueError("pixel_noise_sigma must be >= 0")
        for name, v in (("focal", f), ("principal_point", pp), ("image_size", size)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class RobotState:
    """Tool coordinate vector r and the kinematic model it belongs to."""

    coordinates: np.ndarray
    model_kind: str

    def __post_init__(self):
        m = {CARTESIAN3: 3, ARM5: 5}.get(self.model_kind)
        if m is None:
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        r = _as_vec(self.coordinates, m, "coordinates")
        if self.model_kind == ARM5:
            for name, a in (("pan", r[3]), ("tilt", r[4])):
                if not (-np.pi - 1e-12 < a <= np.pi + 1e-12):
                    raise ValueError(f"{name} angle must lie in (-pi, pi], got {a}")
        r.setflags(write=False)
        object.__setattr__(self, "coordinates", r)

    @property
    def dof(self) -> int:
        return self.coordinates.size


@dataclass(frozen=True)
class JointLimits:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float)
        hi = np.array(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        if np.any(lo >= hi):
            raise ValueError("lower limits must be strictly below upper limits")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def contains(self, coordinates: np.ndarray) -> bool:
        r = np.asarray(coordinates, dtype=float)
        return bool(np.all(r >= self.lower) and np.all(r <= self.upper))

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower


@dataclass(frozen=True)
class ToolGeometry:
    """Tool-frame geometry: tip point, shaft direction, a marker point on the
    shaft, and two basis vectors used for full-frame orientation servoing."""

    tip: np.ndarray
    shaft: np.ndarray
    shaft_marker: np.ndarray
    basis_u: np.ndarray
    basis_v: np.ndarray

    def __post_init__(self):
        tip = _as_vec(self.tip, 3, "tip")
        marker = _as_vec(self.shaft_marker, 3, "shaft_marker")
        shaft = _as_vec(self.shaft, 3, "shaft")
        u = _as_vec(self.basis_u, 3, "basis_u")
        v = _as_vec(self.basis_v, 3, "basis_v")
        for name, vec in (("shaft", shaft), ("basis_u", u), ("basis_v", v)):
            if abs(np.linalg.norm(vec) - 1.0) > 1e-10:
                raise ValueError(f"{name} must be unit length")
        for name, vec in (("tip", tip), ("shaft", shaft), ("shaft_marker", marker), ("basis_u", u), ("basis_v", v)):
            vec.setflags(write=False)
            object.__setattr__(self, name, vec)

    def axis(self, name: str) -> np.ndarray:
        try:
            return {"tool_shaft": self.shaft, "tool_u": self.basis_u, "tool_v": self.basis_v}[name]
        except KeyError:
            raise ValueError(f"unknown tool axis {name!r}") from None


@dataclass(frozen=True)
class TargetAxis:
    """A world-frame unit direction attached to a named target point.

    `baseline` is the physical length (meters) of the image structure a
    detector would measure the direction from (e.g. the head-to-shank
    distance of a screw); it sets the angular noise scale.
    """

    direction: np.ndarray
    anchor: str
    baseline: float = 0.02

    def __post_init__(self):
        d = _unit(self.direction, 3, "direction")
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)
        if self.baseline <= 0:
            raise ValueError("baseline must be positive")


@dataclass(frozen=True)
class Scene:
    """Everything the simulator knows: robot, tool, targets, plane, light,
    and at least two cameras."""

    robot: RobotState
    joint_limits: JointLimits
    tool: ToolGeometry
    targets: dict[str, np.ndarray]
    cameras: tuple[CameraModel, ...]
    plane: Plane
    light_direction: np.ndarray | None = None
    target_axes: dict[str, TargetAxis] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.cameras) < 1:
            raise ValueError("scene needs at least one camera")
        if self.joint_limits.lower.size != self.robot.dof:
            raise ValueError("joint limits must match the robot's degrees of freedom")
        targets = {k: _as_vec(v, 3, f"target {k}") for k, v in self.targets.items()}
        for v in targets.values():
            v.setflags(write=False)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "cameras", tuple(self.cameras))
        for axis in self.target_axes.values():
            if axis.anchor not in targets:
                raise ValueError(f"target axis anchor {axis.anchor!r} is not a target")
        if self.light_direction is not None:
            light = _unit(self.light_direction, 3, "light_direction")
            light.setflags(write=False)
            object.__setattr__(self, "light_direction", light)

    def with_robot_coordinates(self, coordinates: np.ndarray) -> "Scene":
        return replace(self, robot=RobotState(coordinates, self.robot.model_kind))


@dataclass(frozen=True)
class CameraObservation:
    points: dict[str, np.ndarray]
    directions: dict[str, np.ndarray]


@dataclass(frozen=True)
class Observation:
    cameras: tuple[CameraObservation, ...]


@dataclass(frozen=True)
class Disturbance:
    """A world-frame rigid motion applied to one named scene entity.

    Entities: ``camera:<index>``, ``target:<name>``, ``axis:<name>``.
    """

    entity: str
    transform: RigidTransform


# --- kinematics ---------------------------------------------------------------


def forward_tool_pose(state: RobotState, limits: JointLimits | None = None) -> RigidTransform:
    """Tool pose for a coordinate vector; raises JointLimitError when
    `limits` are given and violated."""
    r = state.coordinates
    if limits is not None and not limits.contains(r):
        raise JointLimitError(f"coordinates {r} violate joint limits")
    if state.model_kind == CARTESIAN3:
        return RigidTransform(np.eye(3), r)
    rotation = rot_z(r[3]) @ rot_y(r[4])
    return RigidTransform(rotation, r[:3].copy())


def tool_pose(scene: Scene) -> RigidTransform:
    return forward_tool_pose(scene.robot, scene.joint_limits)


def tool_tip_world(scene: Scene) -> np.ndarray:
    return tool_pose(scene).apply(scene.tool.tip)


def tool_axis_world(scene: Scene, name: str = "tool_shaft") -> np.ndarray:
    return tool_pose(scene).rotate(scene.tool.axis(name))


# --- projection and shadows ---------------------------------------------------


def project(camera: CameraModel, point: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
    """Pixel of one world point; raises BehindCameraError at depth <= eps.

    Gaussian pixel noise is added only when `rng` is given and the camera has
    a nonzero noise sigma; oracles use the noiseless variant.
    """
    p = np.asarray(point, dtype=float).reshape(1, 3)
    if not np.all(np.isfinite(p)):
        raise ValueError("point must be finite")
    pixels, valid = kernels.project_points(
        camera.pose.rotation,
        camera.pose.translation,
        camera.focal[0],
        camera.focal[1],
        camera.principal_point[0],
        camera.principal_point[1],
        camera.radial_distortion,
        p,
    )
    if not valid[0]:
        raise BehindCameraError("point is at or behind the camera plane")
    pix = pixels[0]
    if rng is not None and camera.pixel_noise_sigma > 0:
        pix = pix + rng.normal(0.0, camera.pixel_noise_sigma, 2)
    return pix


def shadow_point(tip: np.ndarray, plane: Plane, light_direction: np.ndarray) -> np.ndarray:
    """Intersection of the ray from `tip` along the light direction with the
    plane; the ray parameter must be non-negative."""
    tip = _as_vec(tip, 3, "tip")
    light = np.asarray(light_direction, dtype=float)
    denom = float(np.dot(light, plane.normal))
    if abs(denom) <= 1e-9:
        raise DegenerateGeometryError("light direction is parallel to the plane")
    t = float(np.dot(plane.point - tip, plane.normal)) / denom
    if t < -1e-12:
        raise DegenerateGeometryError("plane lies behind the tip along the light direction")
    return tip + max(t, 0.0) * light


def _world_geometry(scene: Scene):
    """Named world points and (anchor, direction, baseline) triples the
    cameras observe."""
    pose = tool_pose(scene)
    tip = pose.apply(scene.tool.tip)
    points: list[tuple[str, np.ndarray]] = [("tool_tip", tip)]
    if scene.light_direction is not None:
        points.append(("shadow", shadow_point(tip, scene.plane, scene.light_direction)))
    points.extend(scene.targets.items())
    marker_len = float(np.linalg.norm(scene.tool.shaft_marker - scene.tool.tip))
    if marker_len <= 0:
        marker_len = DIRECTION_SEGMENT
    directions: list[tuple[str, np.ndarray, np.ndarray, float]] = [
        (name, tip, pose.rotate(scene.tool.axis(name)), marker_len) for name in _TOOL_AXIS_NAMES
    ]
    for name, axis in scene.target_axes.items():
        directions.append((name, scene.targets[axis.anchor], axis.direction, axis.baseline))
    return points, directions


def observe(scene: Scene, rng: np.random.Generator | None = None) -> Observation:
    """Per-camera pixels of all named points plus unit image-plane direction
    vectors for the tool and target axes.

    Pixel noise is drawn independently per point per camera per call when
    `rng` is given. Each direction additionally receives angular noise of
    sigma * sqrt(2) / L pixels-equivalent, where L is the projected pixel
    length of that axis's physical detection baseline (a detector measures
    direction from two point detections a baseline apart).
    """
    points, directions = _world_geometry(scene)
    npts = len(points)
    coords = np.empty((npts + 2 * len(directions), 3))
    for i, (_, p) in enumerate(points):
        coords[i] = p
    for j, (_, anchor, vec, _) in enumerate(directions):
        coords[npts + 2 * j] = anchor
        coords[npts + 2 * j + 1] = anchor + DIRECTION_SEGMENT * vec

    cams = []
    for ci, cam in enumerate(scene.cameras):
        pixels, valid = kernels.project_points(
            cam.pose.rotation,
            cam.pose.translation,
            cam.focal[0],
            cam.focal[1],
            cam.principal_point[0],
            cam.principal_point[1],
            cam.radial_distortion,
            coords,
        )
        if not np.all(valid):
            bad = int(np.flatnonzero(~valid)[0])
            name = points[bad][0] if bad < npts else directions[(bad - npts) // 2][0]
            raise BehindCameraError(
                f"feature {name!r} is behind camera {ci}", feature=name, camera=ci
            )
        point_px = pixels[:npts]
        noisy = rng is not None and cam.pixel_noise_sigma > 0
        if noisy:
            point_px = point_px + rng.normal(0.0, cam.pixel_noise_sigma, (npts, 2))
        obs_points = {name: point_px[i].copy() for i, (name, _) in enumerate(points)}
        obs_dirs = {}
        for j, (name, _, _, baseline) in enumerate(directions):
            d = pixels[npts + 2 * j + 1] - pixels[npts + 2 * j]
            norm = float(np.linalg.norm(d))
            if norm < 1e-12:
                raise DegenerateProjectionError(
                    f"axis {name!r} projects to a point in camera {ci}"
                )
            d = d / norm
            if noisy:
                # Two endpoint detections a baseline apart: angular noise is
                # sigma*sqrt(2) over the baseline's projected pixel length.
                length_px = norm * baseline / DIRECTION_SEGMENT
                dtheta = rng.normal(0.0, cam.pixel_noise_sigma * np.sqrt(2.0) / length_px)
                c, s = np.cos(dtheta), np.sin(dtheta)
                d = np.array([c * d[0] - s * d[1], s * d[0] + c * d[1]])
            obs_dirs[name] = d
        cams.append(CameraObservation(obs_points, obs_dirs))
    return Observation(tuple(cams))


# --- disturbances -------------------------------------------------------------


def perturb(scene: Scene, disturbance: Disturbance) -> Scene:
    """Apply a rigid motion to one named entity; pure function of its inputs."""
    kind, _, name = disturbance.entity.partition(":")
    t = disturbance.transform
    if kind == "camera":
        idx = int(name)
        if not 0 <= idx < len(scene.cameras):
            raise ValueError(f"camera index {idx} out of range")
        cams = list(scene.cameras)
        # Moving the camera body by T in the world turns a world-to-camera
        # pose P into P o T^-1.
        cams[idx] = replace(cams[idx], pose=cams[idx].pose.compose(t.inverse()))
        return replace(scene, cameras=tuple(cams))
    if kind == "target":
        if name not in scene.targets:
            raise ValueError(f"unknown target {name!r}")
        targets = dict(scene.targets)
        targets[name] = t.apply(targets[name])
        return replace(scene, targets=targets)
    if kind == "axis":
        if name not in scene.target_axes:
            raise ValueError(f"unknown target axis {name!r}")
        axes = dict(scene.target_axes)
        axes[name] = replace(axes[name], direction=t.rotation @ axes[name].direction)
        return replace(scene, target_axes=axes)
    raise ValueError(f"unknown disturbance entity {disturbance.entity!r}")


def camera_rotation_disturbance(scene: Scene, camera_index: int, axis: np.ndarray, angle: float) -> Disturbance:
    """Disturbance rotating one camera about its own center."""
    center = scene.cameras[camera_index].pose.inverse().translation
    from .geometry import rotation_about_axis

    return Disturbance(
        f"camera:{camera_index}",
        rotation_about_point(rotation_about_axis(axis, angle), center),
    )


# --- analytic feature Jacobian -------------------------------------------------


def _rotation_derivatives(state: RobotState):
    """R(r) and dR/d(angle) for each angular coordinate."""
    if state.model_kind == CARTESIAN3:
        return np.eye(3), []
    pan, tilt = state.coordinates[3], state.coordinates[4]
    rz, ry = rot_z(pan), rot_y(tilt)
    c, s = np.cos(pan), np.sin(pan)
    drz = np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])
    c, s = np.cos(tilt), np.sin(tilt)
    dry = np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])
    return rz @ ry, [drz @ ry, rz @ dry]


def _projection_with_jacobian(cam: CameraModel, p_world: np.ndarray):
    """Pixel of a world point and its 2x3 derivative w.r.t. the world point."""
    pc = cam.pose.apply(p_world)
    z = pc[2]
    if z <= kernels.BEHIND_EPS:
        raise BehindCameraError("point is at or behind the camera plane")
    x, y = pc[0] / z, pc[1] / z
    k1 = cam.radial_distortion
    r2 = x * x + y * y
    s = 1.0 + k1 * r2
    fx, fy = cam.focal
    pixel = np.array([fx * x * s + cam.principal_point[0], fy * y * s + cam.principal_point[1]])
    dist = np.array([[s + 2.0 * k1 * x * x, 2.0 * k1 * x * y], [2.0 * k1 * x * y, s + 2.0 * k1 * y * y]])
    persp = np.array([[1.0 / z, 0.0, -x / z], [0.0, 1.0 / z, -y / z]])
    jac = np.diag([fx, fy]) @ dist @ persp @ cam.pose.rotation
    return pixel, jac


def analytic_feature_jacobian(scene: Scene, spec) -> np.ndarray:
    """Exact Jacobian of the noiseless observed features w.r.t. the robot
    coordinates, by the chain rule through kinematics, projection, and
    distortion. This is the oracle against which the finite-difference
    bootstrap is validated; the controller never calls it.
    """
    state = scene.robot
    r = state.coordinates
    m = r.size
    rotation, drs = _rotation_derivatives(state)
    tip_tool = scene.tool.tip
    tip_world = rotation @ tip_tool + r[:3]

    def point_jac(p_tool):
        jac = np.zeros((3, m))
        jac[:, :3] = np.eye(3)
        for j, dr in enumerate(drs):
            jac[:, 3 + j] = dr @ p_tool
        return jac

    def vector_jac(v_tool):
        jac = np.zeros((3, m))
        for j, dr in enumerate(drs):
            jac[:, 3 + j] = dr @ v_tool
        return jac

    tip_jac = point_jac(tip_tool)

    if isinstance(spec, PositionFeatureSpec):
        if spec.point != "tool_tip":
            raise ValueError("only the tool tip moves with the robot")
        rows = []
        for cam in scene.cameras:
            _, jpi = _projection_with_jacobian(cam, tip_world)
            rows.append(jpi @ tip_jac)
        return np.vstack(rows)

    if isinstance(spec, OrientationFeatureSpec):
        goals = np.asarray(spec.goal_angles, dtype=float)
        if goals.shape[0] != len(scene.cameras):
            raise ValueError("goal_angles rows must match the camera count")
        rows = []
        for ci, cam in enumerate(scene.cameras):
            for ai, axis in enumerate(spec.axes):
                v_tool = scene.tool.axis(axis)
                v_world = rotation @ v_tool
                end = tip_world + DIRECTION_SEGMENT * v_world
                pix0, j0 = _projection_with_jacobian(cam, tip_world)
                pix1, j1 = _projection_with_jacobian(cam, end)
                g = pix1 - pix0
                denom = float(g @ g)
                if denom < 1e-24:
                    raise DegenerateProjectionError(
                        f"axis {axis!r} projects to a point in camera {ci}"
                    )
                dg = j1 @ (tip_jac + DIRECTION_SEGMENT * vector_jac(v_tool)) - j0 @ tip_jac
                dtheta = (g[0] * dg[1] - g[1] * dg[0]) / denom
                theta = np.arctan2(g[1], g[0])
                rows.append(np.sin(goals[ci, ai] - theta) * dtheta)
        return np.vstack(rows)

    if isinstance(spec, ShadowFeatureSpec):
        if scene.light_direction is None:
            raise DegenerateGeometryError("scene has no light direction for shadows")
        cam = scene.cameras[spec.side_camera]
        light = scene.light_direction
        normal = scene.plane.normal
        shadow = shadow_point(tip_world, scene.plane, light)
        shadow_jac = (np.eye(3) - np.outer(light, normal) / float(light @ normal)) @ tip_jac
        q_tip, j_tip = _projection_with_jacobian(cam, tip_world)
        q_sh, j_sh = _projection_with_jacobian(cam, shadow)
        diff = q_tip - q_sh
        dist = float(np.linalg.norm(diff))
        if dist < 1e-12:
            raise DegenerateProjectionError("distance gradient is undefined at contact")
        row = diff @ (j_tip @ tip_jac - j_sh @ shadow_jac) / dist
        return row.reshape(1, m)

    raise TypeError(f"unsupported feature spec {type(spec).__name__}")
