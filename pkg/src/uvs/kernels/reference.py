"""Pure-numpy implementations of the hot kernels.

These are the reference semantics; `uvs.kernels.jit` carries numba-compiled
twins with the same signatures and the same algorithm. Keep the two files in
lockstep: the parity test suite compares them on random inputs.
"""

import numpy as np

# A point is "behind" a camera when its depth is at or below this (meters).
BEHIND_EPS = 1e-9


def project_points(rotation, translation, fx, fy, cx, cy, k1, points):
    """Project world points through a pinhole camera with one radial term.

    Args:
        rotation: (3, 3) world-to-camera rotation.
        translation: (3,) world-to-camera translation (meters).
        fx, fy: focal lengths (pixels).
        cx, cy: principal point (pixels).
        k1: radial distortion coefficient on the squared normalized radius.
        points: (N, 3) world points.

    Returns:
        (pixels, valid): (N, 2) pixel coordinates (NaN where invalid) and an
        (N,) boolean mask that is False where the point depth is <= BEHIND_EPS.
    """
    pc = points @ rotation.T + translation
    z = pc[:, 2]
    valid = z > BEHIND_EPS
    zsafe = np.where(valid, z, 1.0)
    x = pc[:, 0] / zsafe
    y = pc[:, 1] / zsafe
    scale = 1.0 + k1 * (x * x + y * y)
    pixels = np.empty((points.shape[0], 2))
    pixels[:, 0] = fx * (x * scale) + cx
    pixels[:, 1] = fy * (y * scale) + cy
    pixels[~valid] = np.nan
    return pixels, valid


def lm_track_update(J0, dr, df, mu, damping, max_iter, gtol):
    """Track-update a Jacobian estimate by damped iterative least squares.

    Minimizes ``||J @ dr - df||^2 + mu * ||J - J0||_F^2`` starting from J0,
    using Levenberg-Marquardt iterations: damped normal-equation steps with
    multiplicative damping adaptation. The data term couples rows only
    through the shared Gauss-Newton matrix ``outer(dr, dr) + mu * I``, so one
    m-by-m solve serves all k rows per iteration.

    Args:
        J0: (k, m) starting estimate.
        dr: (m,) coordinate change, must be nonzero.
        df: (k,) observed feature change.
        mu: weight of the Frobenius tracking term, >= 0.
        damping: initial damping as a fraction of (||dr||^2 + mu).
        max_iter: iteration cap.
        gtol: relative gradient tolerance for convergence.

    Returns:
        (J, iterations, converged): the updated (k, m) matrix, the number of
        iterations spent, and whether the gradient tolerance was met.
    """
    k, m = J0.shape
    s = float(dr @ dr)
    sigma = s + mu
    H = np.outer(dr, dr) + mu * np.eye(m)
    eye = np.eye(m)

    J = J0.copy()
    r = J @ dr - df
    obj = float(r @ r)
    lam = damping * sigma
    scale = 1.0 + float(np.sqrt(np.sum(J0 * J0)))
    gstop = gtol * sigma * scale
    step_stop = 1e-9 * scale

    converged = False
    it = 0
    while it < max_iter:
        it += 1
        grad = np.outer(r, dr) + mu * (J - J0)
        if np.sqrt(np.sum(grad * grad)) <= gstop:
            converged = True
            break
        delta = -np.linalg.solve(H + lam * eye, grad.T).T
        J_try = J + delta
        r_try = J_try @ dr - df
        d = J_try - J0
        obj_try = float(r_try @ r_try) + mu * float(np.sum(d * d))
        if np.sqrt(np.sum(delta * delta)) <= step_stop:
            # The remaining move is below resolution; take it and finish.
            J, r = J_try, r_try
            converged = True
            break
        # The objective is a convex quadratic with this exact Gauss-Newton
        # matrix, so damped steps are true descent steps; the float-tolerance
        # accept keeps progress going once differences dip below resolution.
        if obj_try <= obj * (1.0 + 1e-10) + 1e-300:
            J = J_try
            r = r_try
            obj = obj_try
            lam *= 0.25
        else:
            lam *= 4.0
            if lam > 1e15 * sigma:
                break
    return J, it, converged
