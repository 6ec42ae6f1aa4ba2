"""Calibration-free image-based visual servoing with a built-in two-camera
ground-truth simulator and a scenario harness."""

from .errors import (
    BehindCameraError,
    DegenerateGeometryError,
    DegenerateProjectionError,
    InitializationFailedError,
    InsufficientViewsError,
    JointLimitError,
    RankDeficientError,
    ScenarioError,
    StepFailedError,
    UvsError,
)
from .features import (
    FeatureVector,
    ImageAngle,
    OrientationFeatureSpec,
    PositionFeatureSpec,
    ShadowFeatureSpec,
    energy,
    image_angle,
    orientation_feature_vector,
    shadow_distance_feature,
    stack_point_features,
)
from .geometry import Plane, RigidTransform, look_at_pose
from .harness import RunReport, emit_report, run_exp1_sequence, run_scenario, sweep_camera_angle
from .jacobian import (
    EstimatorConfig,
    ImageJacobian,
    condition_number,
    init_finite_difference,
    pseudo_inverse,
    update,
)
from .scenario import Scenario, builtin_scenario, load_scenario, scenario_from_dict
from .servo import (
    ReinitPolicy,
    Robot,
    ServoResult,
    ServoTask,
    control_step,
    run_orientation_servo,
    run_pose_servo,
    run_position_servo,
    run_shadow_servo,
)
from .world import (
    CameraModel,
    Disturbance,
    JointLimits,
    Observation,
    RobotState,
    Scene,
    TargetAxis,
    ToolGeometry,
    analytic_feature_jacobian,
    forward_tool_pose,
    observe,
    perturb,
    project,
    shadow_point,
)

__version__ = "0.1.0"
