"""Rigid-body transforms and small 3D helpers.

Conventions:
  - World frame is right-handed, Z up.
  - A RigidTransform maps points from its source frame to its target frame
    as ``p_out = R @ p_in + t``. Camera poses are world-to-camera.
  - Camera frames follow the computer-vision convention: X right in the
    image, Y down, Z forward along the optical axis.
"""

from dataclasses import dataclass

import numpy as np

_ORTHONORMAL_TOL = 1e-8


def _as_vec(x, n, name):
    v = np.array(x, dtype=float)  # always a fresh copy; callers may freeze it
    if v.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


def _unit(x, n, name):
    v = _as_vec(x, n, name)
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        raise ValueError(f"{name} must be nonzero")
    return v / norm


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid transform: a rotation (3x3, det +1) plus a translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = _as_vec(self.translation, 3, "translation")
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if np.linalg.norm(r.T @ r - np.eye(3)) > _ORTHONORMAL_TOL:
            raise ValueError("rotation is not orthonormal")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation must have determinant +1")
        r = r.copy()
        t = t.copy()
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self o other)(p) = self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) batch."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate free vectors (no translation)."""
        v = np.asarray(vectors, dtype=float)
        return v @ self.rotation.T


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about an arbitrary (auto-normalized) axis."""
    a = _unit(axis, 3, "axis")
    kx = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)


def rotation_about_point(rotation: np.ndarray, center: np.ndarray) -> RigidTransform:
    """World transform that rotates space about a fixed point."""
    c = _as_vec(center, 3, "center")
    return RigidTransform(rotation, c - rotation @ c)


def look_at_pose(eye: np.ndarray, target: np.ndarray, up: np.ndarray = (0.0, 0.0, 1.0)) -> RigidTransform:
    """World-to-camera pose for a camera at `eye` looking toward `target`.

    The camera Z axis points at the target; X is the image-right direction
    chosen perpendicular to `up`; Y completes the frame pointing image-down.
    Raises ValueError when the viewing direction is parallel to `up`.
    """
    eye = _as_vec(eye, 3, "eye")
    target = _as_vec(target, 3, "target")
    forward = _unit(target - eye, 3, "viewing direction")
    upv = _unit(up, 3, "up")
    right = np.cross(forward, upv)
    nr = np.linalg.norm(right)
    if nr < 1e-9:
        raise ValueError("viewing direction is parallel to the up vector")
    right = right / nr
    down = np.cross(forward, right)
    r = np.stack([right, down, forward])
    return RigidTransform(r, -r @ eye)


@dataclass(frozen=True)
class Plane:
    """Plane through `point` with unit `normal`."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        p = _as_vec(self.point, 3, "point")
        n = _unit(self.normal, 3, "normal")
        p.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "normal", n)

    def signed_distance(self, point: np.ndarray) -> float:
        return float(np.dot(np.asarray(point, dtype=float) - self.point, self.normal))


def angle_between(u: np.ndarray, v: np.ndarray) -> float:
    """Angle in radians between two 3D vectors (numerically safe arccos)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    c = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))
