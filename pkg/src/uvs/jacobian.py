"""Image-Jacobian estimation without camera or hand-eye calibration.

The estimate is bootstrapped by central finite differences of real (or
simulated) observations, then tracked while the robot moves by solving, for
each realized step (dr, df),

    minimize_J  ||J @ dr - df||^2 + mu * ||J - J_prev||_F^2

with damped iterative least squares started from the previous estimate. The
Frobenius term keeps the otherwise under-determined problem unique and
anchors the estimate to its history; `mu` scales with ||dr||^2 so the blend
is step-size invariant.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import InitializationFailedError, RankDeficientError, UvsError


@dataclass(frozen=True)
class ImageJacobian:
    """A tracked k-by-m feature Jacobian with provenance metadata."""

    matrix: np.ndarray
    last_residual: float = 0.0
    age: int = 0
    stale: bool = False

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if mat.ndim != 2:
            raise ValueError(f"matrix must be 2-D, got shape {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise ValueError("matrix entries must be finite")
        mat = mat.copy()
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning knobs for the estimator.

    fd_step: probe step per coordinate (scalar or per-coordinate array;
        meters for positions, radians for angles).
    lm_damping: initial damping of the tracking solver, as a fraction of
        ||dr||^2 + mu.
    update_regularization: weight of the Frobenius tracking term relative to
        ||dr||^2 (the effective mu is this value times ||dr||^2).
    svd_cutoff: relative singular-value threshold for pseudo-inversion.
    reinit_residual_threshold: tracked-residual level that triggers a
        finite-difference re-initialization in the servo loop.
    max_age: optional update count after which the servo re-initializes.
    min_update_step: ||dr|| below which an update carries no information and
        is skipped.
    """

    fd_step: float | np.ndarray = 1e-4
    lm_damping: float = 1e-3
    update_regularization: float = 1e-3
    svd_cutoff: float = 1e-6
    reinit_residual_threshold: float = 5.0
    max_age: int | None = None
    min_update_step: float = 1e-9
    lm_max_iter: int = 60
    lm_gtol: float = 1e-12

    def __post_init__(self):
        if np.any(np.asarray(self.fd_step) <= 0):
            raise ValueError("fd_step must be positive")
        if self.lm_damping <= 0:
            raise ValueError("lm_damping must be positive")
        if self.update_regularization < 0:
            raise ValueError("update_regularization must be >= 0")
        if not 0.0 < self.svd_cutoff < 1.0:
            raise ValueError("svd_cutoff must lie in (0, 1)")
        if self.reinit_residual_threshold <= 0:
            raise ValueError("reinit_residual_threshold must be positive")
        if self.max_age is not None and self.max_age <= 0:
            raise ValueError("max_age must be positive when set")


def init_finite_difference(probe, r0, config: EstimatorConfig) -> ImageJacobian:
    """Bootstrap the Jacobian by central differences around r0.

    `probe` maps a coordinate vector to a feature-value vector and costs one
    observation per call; exactly 2m calls are made (the robot is assumed to
    return to r0 afterwards). Column j is
    (probe(r0 + h_j e_j) - probe(r0 - h_j e_j)) / (2 h_j).

    Raises InitializationFailedError naming the coordinate whose probe failed.
    """
    r0 = np.asarray(getattr(r0, "coordinates", r0), dtype=float)
    m = r0.size
    steps = np.broadcast_to(np.asarray(config.fd_step, dtype=float), (m,))
    columns = []
    for j in range(m):
        h = steps[j]
        shifted = r0.copy()
        try:
            shifted[j] = r0[j] + h
            f_plus = np.asarray(probe(shifted), dtype=float).ravel()
            shifted[j] = r0[j] - h
            f_minus = np.asarray(probe(shifted), dtype=float).ravel()
        except UvsError as exc:
            raise InitializationFailedError(
                f"probe failed while perturbing coordinate {j}: {exc}", coordinate=j
            ) from exc
        columns.append((f_plus - f_minus) / (2.0 * h))
    return ImageJacobian(np.column_stack(columns), last_residual=0.0, age=0)


def update(J_prev: ImageJacobian, dr: np.ndarray, df: np.ndarray, config: EstimatorConfig) -> ImageJacobian:
    """Track the Jacobian with one realized (dr, df) pair.

    Steps shorter than `min_update_step` are skipped (no information, and the
    tracking objective degenerates). A solver that hits its iteration cap
    returns its best iterate flagged stale.
    """
    dr = np.asarray(dr, dtype=float).ravel()
    df = np.asarray(df, dtype=float).ravel()
    k, m = J_prev.shape
    if dr.size != m or df.size != k:
        raise ValueError(f"expected dr of size {m} and df of size {k}")
    step = float(np.linalg.norm(dr))
    if step <= config.min_update_step:
        return replace(J_prev, age=J_prev.age + 1)
    mu = config.update_regularization * step * step
    matrix, _, converged = kernels.lm_track_update(
        np.ascontiguousarray(J_prev.matrix),
        dr,
        df,
        mu,
        config.lm_damping,
        config.lm_max_iter,
        config.lm_gtol,
    )
    residual = float(np.linalg.norm(matrix @ dr - df))
    return ImageJacobian(matrix, last_residual=residual, age=J_prev.age + 1, stale=not converged)


def _pinv_from_svd(matrix: np.ndarray, svd_cutoff: float):
    u, s, vt = np.linalg.svd(matrix, full_matrices=False)
    if s[0] <= 0.0:
        raise RankDeficientError("matrix is zero")
    keep = s > svd_cutoff * s[0]
    if not np.any(keep):
        raise RankDeficientError("all singular values below the cutoff")
    return (vt[keep].T / s[keep]) @ u[:, keep].T, s, keep


def pseudo_inverse(J: ImageJacobian, config: EstimatorConfig | None = None) -> np.ndarray:
    """SVD-based Moore-Penrose inverse with relative small-singular-value
    truncation. Requires at least as many features as coordinates."""
    cfg = config or EstimatorConfig()
    matrix = J.matrix if isinstance(J, ImageJacobian) else np.asarray(J, dtype=float)
    k, m = matrix.shape
    if k < m:
        raise ValueError(f"need features >= coordinates, got shape {k}x{m}")
    pinv, _, _ = _pinv_from_svd(matrix, cfg.svd_cutoff)
    return pinv


def condition_number(J: ImageJacobian, svd_cutoff: float = 1e-6) -> float:
    """sigma_max / sigma_min over retained singular values; +inf when the
    matrix is numerically rank-deficient at the cutoff."""
    matrix = J.matrix if isinstance(J, ImageJacobian) else np.asarray(J, dtype=float)
    s = np.linalg.svd(matrix, compute_uv=False)
    if s[0] <= 0.0:
        raise RankDeficientError("condition number of a zero matrix")
    if s[-1] <= svd_cutoff * s[0]:
        return float("inf")
    return float(s[0] / s[-1])
