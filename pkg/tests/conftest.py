import numpy as np
import pytest

from uvs import kernels
from uvs.geometry import look_at_pose
from uvs.scenario import builtin_scenario
from uvs.world import (
    CameraModel,
    JointLimits,
    RobotState,
    Scene,
    ToolGeometry,
    observe,
)
from uvs.geometry import Plane


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Trigger JIT compilation once so timed tests measure the algorithms."""
    kernels.project_points(np.eye(3), np.zeros(3), 500.0, 500.0, 320.0, 240.0, 0.0,
                           np.array([[0.0, 0.0, 1.0]]))
    kernels.lm_track_update(np.ones((2, 2)), np.array([1.0, 0.0]), np.ones(2),
                            1e-3, 1e-3, 30, 1e-12)


@pytest.fixture
def exp1_scenario():
    return builtin_scenario("exp1")


@pytest.fixture
def exp2_scenario():
    return builtin_scenario("exp2")


def _random_scene(rng: np.random.Generator, kind: str = "cartesian3") -> Scene:
    """A random validated scene: two cameras on a ring with >= 40 degrees of
    separation, a random tool, and targets near the workspace center."""
    while True:
        center = rng.uniform(-0.02, 0.02, 3) + np.array([0.0, 0.0, 0.05])
        radius = rng.uniform(0.45, 0.8)
        height = rng.uniform(0.1, 0.45)
        phi0 = rng.uniform(0.0, 2 * np.pi)
        dphi = np.radians(rng.uniform(40.0, 140.0))
        cams = []
        for phi in (phi0, phi0 + dphi):
            eye = center + np.array([radius * np.cos(phi), radius * np.sin(phi), height])
            cams.append(CameraModel(
                pose=look_at_pose(eye, center),
                focal=rng.uniform(1500.0, 3200.0, 2),
                principal_point=np.array([960.0, 540.0]),
                image_size=np.array([1920.0, 1080.0]),
                radial_distortion=rng.uniform(-0.2, 0.1),
            ))
        if kind == "cartesian3":
            coords = rng.uniform(-0.04, 0.04, 3) + np.array([0.0, 0.0, 0.08])
            lower = np.array([-0.2, -0.2, 0.02])
            upper = np.array([0.2, 0.2, 0.25])
        else:
            coords = np.concatenate([
                rng.uniform(-0.04, 0.04, 3) + np.array([0.0, 0.0, 0.15]),
                rng.uniform(-0.6, 0.6, 2),
            ])
            lower = np.array([-0.3, -0.3, 0.05, -1.3, -1.3])
            upper = np.array([0.3, 0.3, 0.4, 1.3, 1.3])
        shaft = np.array([0.0, 0.0, -1.0])
        tool = ToolGeometry(
            tip=np.array([0.0, 0.0, -rng.uniform(0.02, 0.12)]),
            shaft=shaft,
            shaft_marker=np.array([0.0, 0.0, -0.01]),
            basis_u=np.array([1.0, 0.0, 0.0]),
            basis_v=np.array([0.0, 1.0, 0.0]),
        )
        scene = Scene(
            robot=RobotState(coords, kind),
            joint_limits=JointLimits(lower, upper),
            tool=tool,
            targets={"cone_vertex": center + rng.uniform(-0.03, 0.03, 3)},
            cameras=tuple(cams),
            plane=Plane(np.zeros(3), np.array([0.0, 0.0, 1.0])),
            light_direction=np.array([0.0, 0.0, -1.0]),
        )
        try:
            observe(scene)
        except Exception:
            continue
        return scene


@pytest.fixture
def make_random_scene():
    return _random_scene
