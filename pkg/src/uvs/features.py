"""Controller-side visual features: stacked point pixels, image-angle
alignment energies, and the scalar tip-to-shadow distance.

Feature ordering is camera-major, axis-minor throughout; the controller only
relies on the ordering being consistent between goal and measurement.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProjectionError, InsufficientViewsError

POSITION = "position"
ORIENTATION = "orientation"
SHADOW_DISTANCE = "shadow_distance"

# Image-plane vectors shorter than this carry no usable direction (pixels).
MIN_DIRECTION_NORM = 1e-9


@dataclass(frozen=True)
class FeatureVector:
    """Stacked image measurements with their kind and view count."""

    values: np.ndarray
    kind: str
    camera_count: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        n = self.camera_count
        if self.kind == POSITION:
            if v.size != 2 * n:
                raise ValueError(f"position features need 2n values, got {v.size} for n={n}")
        elif self.kind == ORIENTATION:
            if v.size not in (n, 2 * n):
                raise ValueError(f"orientation features need n or 2n values, got {v.size} for n={n}")
            if np.any(v > 1e-9) or np.any(v < -2.0 - 1e-9):
                raise ValueError("orientation energies must lie in [-2, 0]")
        elif self.kind == SHADOW_DISTANCE:
            if v.size != 1:
                raise ValueError("shadow_distance is a single value")
        else:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ImageAngle:
    """Direction of an image-plane vector, radians in (-pi, pi]."""

    theta: float


def stack_point_features(pixels) -> FeatureVector:
    """Stack per-camera pixels of one tracked point as (u1, v1, ..., un, vn)."""
    pix = [np.asarray(p, dtype=float).ravel() for p in pixels]
    if len(pix) < 2:
        raise InsufficientViewsError(
            f"point features need at least two views, got {len(pix)}"
        )
    for p in pix:
        if p.shape != (2,):
            raise ValueError("each pixel must be a 2-vector")
    return FeatureVector(np.concatenate(pix), POSITION, len(pix))


def unstack_point_features(fv: FeatureVector) -> list[np.ndarray]:
    """Inverse of stack_point_features."""
    if fv.kind != POSITION:
        raise ValueError("not a position feature vector")
    return [fv.values[2 * i : 2 * i + 2].copy() for i in range(fv.camera_count)]


def image_angle(v) -> ImageAngle:
    """Angle of a 2D image vector; (1, 0) maps to 0, counter-clockwise positive."""
    vec = np.asarray(v, dtype=float).ravel()
    if vec.shape != (2,):
        raise ValueError("image vector must be a 2-vector")
    if math.hypot(vec[0], vec[1]) < MIN_DIRECTION_NORM:
        raise DegenerateProjectionError(
            "image vector too short to define an angle (the 3D vector points along the optical axis)"
        )
    return ImageAngle(math.atan2(vec[1], vec[0]))


def energy(theta_goal: ImageAngle, theta_now: ImageAngle) -> float:
    """Alignment energy cos(goal - now) - 1: zero when aligned, -2 when opposite.

    Continuous across the +/-pi wrap and symmetric in its arguments.
    """
    return math.cos(theta_goal.theta - theta_now.theta) - 1.0


def orientation_feature_vector(angle_pairs, axes: int) -> FeatureVector:
    """Stack alignment energies, one per tracked axis per camera.

    Args:
        angle_pairs: per camera, a sequence of `axes` (goal, current) angle
            pairs.
        axes: number of tracked axes, 1 or 2 (two suffice to pin a full
            frame; one for an axially symmetric tool).
    """
    if axes not in (1, 2):
        raise ValueError(f"axes must be 1 or 2, got {axes}")
    pairs = list(angle_pairs)
    if len(pairs) < 2:
        raise InsufficientViewsError(
            f"orientation features need at least two views, got {len(pairs)}"
        )
    values = []
    for cam_pairs in pairs:
        cam_pairs = list(cam_pairs)
        if len(cam_pairs) != axes:
            raise ValueError(f"expected {axes} angle pairs per camera, got {len(cam_pairs)}")
        for goal, now in cam_pairs:
            values.append(energy(goal, now))
    return FeatureVector(np.array(values), ORIENTATION, len(pairs))


def shadow_distance_feature(tip_px, shadow_px) -> FeatureVector:
    """Euclidean pixel distance between a tool tip and its cast shadow."""
    tip = np.asarray(tip_px, dtype=float).ravel()
    shadow = np.asarray(shadow_px, dtype=float).ravel()
    if tip.shape != (2,) or shadow.shape != (2,):
        raise ValueError("tip and shadow must be 2-vectors")
    return FeatureVector(np.array([np.linalg.norm(tip - shadow)]), SHADOW_DISTANCE, 1)


# --- feature specs -----------------------------------------------------------
#
# Small descriptors naming which stacked features a controller servoes on.
# The ground-truth simulator consumes the same descriptors to produce exact
# Jacobians for testing, so both sides agree on ordering and content.


@dataclass(frozen=True)
class PositionFeatureSpec:
    """Pixels of one tracked point stacked across all cameras."""

    point: str = "tool_tip"


@dataclass(frozen=True)
class OrientationFeatureSpec:
    """Alignment energies of tracked tool axes against fixed goal angles.

    goal_angles has shape (n_cameras, n_axes), camera-major like the feature
    stacking.
    """

    axes: tuple[str, ...]
    goal_angles: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if len(self.axes) not in (1, 2):
            raise ValueError("1 or 2 tracked axes supported")
        goals = tuple(tuple(float(a) for a in row) for row in self.goal_angles)
        for row in goals:
            if len(row) != len(self.axes):
                raise ValueError("goal_angles rows must match the number of axes")
        object.__setattr__(self, "goal_angles", goals)


@dataclass(frozen=True)
class ShadowFeatureSpec:
    """Tip-to-shadow pixel distance seen from one designated side camera."""

    side_camera: int = 1


# --- observation adapters ----------------------------------------------------
#
# Build feature vectors out of an Observation (duck-typed: anything with a
# `cameras` sequence whose entries expose `points` and `directions` dicts).


def point_pixels(observation, name: str) -> list[np.ndarray]:
    return [cam.points[name] for cam in observation.cameras]


def position_features(observation, point: str = "tool_tip") -> FeatureVector:
    return stack_point_features(point_pixels(observation, point))


def axis_angles(observation, axis: str) -> list[ImageAngle]:
    return [image_angle(cam.directions[axis]) for cam in observation.cameras]


def orientation_features(observation, axes, goal_angles) -> FeatureVector:
    """Energies of the tracked tool axes against per-camera goal angles.

    goal_angles: array-like of shape (n_cameras, n_axes), radians.
    """
    goals = np.asarray(goal_angles, dtype=float)
    n = len(observation.cameras)
    if goals.shape != (n, len(axes)):
        raise ValueError(f"goal_angles must have shape ({n}, {len(axes)}), got {goals.shape}")
    pairs = []
    for i, cam in enumerate(observation.cameras):
        cam_pairs = []
        for a, axis in enumerate(axes):
            cam_pairs.append((ImageAngle(goals[i, a]), image_angle(cam.directions[axis])))
        pairs.append(cam_pairs)
    return orientation_feature_vector(pairs, len(axes))


def shadow_feature(observation, side_camera: int) -> FeatureVector:
    cam = observation.cameras[side_camera]
    return shadow_distance_feature(cam.points["tool_tip"], cam.points["shadow"])
