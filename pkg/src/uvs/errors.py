"""Exception types shared across the simulator, estimator, and servo loops."""


class UvsError(Exception):
    """Base class for all package-specific errors."""


class JointLimitError(UvsError):
    """Robot coordinates violate the configured joint limits."""


class BehindCameraError(UvsError):
    """A 3D point lies at or behind a camera's projection plane.

    Carries the offending feature name and camera index when raised from an
    observation, so callers can report which feature was lost.
    """

    def __init__(self, message: str, feature: str | None = None, camera: int | None = None):
        super().__init__(message)
        self.feature = feature
        self.camera = camera


class DegenerateGeometryError(UvsError):
    """Shadow ray parallel to the plane, or intersection behind the ray origin."""


class DegenerateProjectionError(UvsError):
    """An image-plane direction vector is too short to carry an angle."""


class InsufficientViewsError(UvsError):
    """Fewer than two camera views were supplied for a multi-view feature."""


class InitializationFailedError(UvsError):
    """Finite-difference bootstrap failed; carries the offending coordinate."""

    def __init__(self, message: str, coordinate: int | None = None):
        super().__init__(message)
        self.coordinate = coordinate


class RankDeficientError(UvsError):
    """All (or too many) singular values fell below the relative cutoff."""


class StepFailedError(UvsError):
    """A control step could not be computed from the current Jacobian."""


class ScenarioError(UvsError):
    """Scenario file failed to parse or validate; message names the field."""
