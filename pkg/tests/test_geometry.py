import numpy as np
import pytest
from hypothesis import given, strategies as st

from uvs.geometry import (
    Plane,
    RigidTransform,
    angle_between,
    look_at_pose,
    rot_x,
    rot_y,
    rot_z,
    rotation_about_axis,
    rotation_about_point,
)

angles = st.floats(-np.pi, np.pi, allow_nan=False)
axes = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda a: np.linalg.norm(a) > 0.1
)


@given(axes, angles)
def test_rotation_constructors_are_orthonormal(axis, angle):
    r = rotation_about_axis(np.array(axis), angle)
    assert np.linalg.norm(r.T @ r - np.eye(3)) < 1e-10
    assert np.linalg.det(r) > 0


@given(axes, angles, st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)))
def test_compose_inverse_is_identity(axis, angle, translation):
    t = RigidTransform(rotation_about_axis(np.array(axis), angle), np.array(translation))
    ident = t.compose(t.inverse())
    assert np.linalg.norm(ident.rotation - np.eye(3)) < 1e-10
    assert np.linalg.norm(ident.translation) < 1e-10


def test_single_axis_rotations():
    np.testing.assert_allclose(rot_z(np.pi / 2) @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(rot_x(np.pi / 2) @ [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(rot_y(np.pi / 2) @ [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], atol=1e-12)


def test_transform_rejects_improper_rotation():
    reflection = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(ValueError, match="determinant"):
        RigidTransform(reflection, np.zeros(3))
    with pytest.raises(ValueError, match="orthonormal"):
        RigidTransform(np.eye(3) * 2.0, np.zeros(3))


def test_apply_and_rotate_batches():
    t = RigidTransform(rot_z(np.pi / 2), np.array([1.0, 0.0, 0.0]))
    pts = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    np.testing.assert_allclose(t.apply(pts), [[1.0, 1.0, 0.0], [0.0, 0.0, 0.0]], atol=1e-12)
    np.testing.assert_allclose(t.rotate([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)


def test_look_at_points_camera_z_at_target():
    eye = np.array([0.3, -0.2, 0.5])
    target = np.array([0.0, 0.1, 0.0])
    pose = look_at_pose(eye, target)
    in_cam = pose.apply(target)
    np.testing.assert_allclose(in_cam[:2], 0.0, atol=1e-12)
    assert in_cam[2] == pytest.approx(np.linalg.norm(target - eye))


def test_look_at_rejects_parallel_up():
    with pytest.raises(ValueError, match="parallel"):
        look_at_pose([0.0, 0.0, 1.0], [0.0, 0.0, 0.0], up=[0.0, 0.0, 1.0])


def test_rotation_about_point_fixes_center():
    center = np.array([0.2, -0.1, 0.4])
    t = rotation_about_point(rot_z(0.7), center)
    np.testing.assert_allclose(t.apply(center), center, atol=1e-12)


def test_plane_normalizes_and_signed_distance():
    plane = Plane(np.zeros(3), np.array([0.0, 0.0, 3.0]))
    assert np.linalg.norm(plane.normal) == pytest.approx(1.0)
    assert plane.signed_distance([0.0, 0.0, 0.25]) == pytest.approx(0.25)
    assert plane.signed_distance([1.0, 2.0, -0.5]) == pytest.approx(-0.5)


def test_angle_between():
    assert angle_between([1, 0, 0], [0, 2, 0]) == pytest.approx(np.pi / 2)
    assert angle_between([1, 0, 0], [1, 0, 0]) == pytest.approx(0.0)
