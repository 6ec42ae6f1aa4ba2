"""Numba-compiled twins of the reference kernels.

Signatures and algorithms match `uvs.kernels.reference` exactly; only the
implementation style differs (explicit loops, nopython mode). Compiled
artifacts are cached on disk, so the first call in a fresh environment pays
the JIT cost once.
"""

import numpy as np
from numba import njit

from .reference import BEHIND_EPS


@njit(cache=True)
def project_points(rotation, translation, fx, fy, cx, cy, k1, points):
    n = points.shape[0]
    pixels = np.empty((n, 2))
    valid = np.empty(n, dtype=np.bool_)
    for i in range(n):
        px = points[i, 0]
        py = points[i, 1]
        pz = points[i, 2]
        xc = rotation[0, 0] * px + rotation[0, 1] * py + rotation[0, 2] * pz + translation[0]
        yc = rotation[1, 0] * px + rotation[1, 1] * py + rotation[1, 2] * pz + translation[1]
        zc = rotation[2, 0] * px + rotation[2, 1] * py + rotation[2, 2] * pz + translation[2]
        if zc > BEHIND_EPS:
            x = xc / zc
            y = yc / zc
            scale = 1.0 + k1 * (x * x + y * y)
            pixels[i, 0] = fx * (x * scale) + cx
            pixels[i, 1] = fy * (y * scale) + cy
            valid[i] = True
        else:
            pixels[i, 0] = np.nan
            pixels[i, 1] = np.nan
            valid[i] = False
    return pixels, valid


@njit(cache=True)
def lm_track_update(J0, dr, df, mu, damping, max_iter, gtol):
    k, m = J0.shape
    s = 0.0
    for j in range(m):
        s += dr[j] * dr[j]
    sigma = s + mu

    H = np.empty((m, m))
    for a in range(m):
        for b in range(m):
            H[a, b] = dr[a] * dr[b]
        H[a, a] += mu

    J = J0.copy()
    r = np.empty(k)
    obj = 0.0
    for i in range(k):
        acc = 0.0
        for j in range(m):
            acc += J[i, j] * dr[j]
        r[i] = acc - df[i]
        obj += r[i] * r[i]

    sq = 0.0
    for i in range(k):
        for j in range(m):
            sq += J0[i, j] * J0[i, j]
    scale = 1.0 + np.sqrt(sq)
    gstop = gtol * sigma * scale
    step_stop = 1e-9 * scale
    lam = damping * sigma

    converged = False
    it = 0
    grad = np.empty((k, m))
    Hl = np.empty((m, m))
    while it < max_iter:
        it += 1
        gsq = 0.0
        for i in range(k):
            for j in range(m):
                g = r[i] * dr[j] + mu * (J[i, j] - J0[i, j])
                grad[i, j] = g
                gsq += g * g
        if np.sqrt(gsq) <= gstop:
            converged = True
            break
        for a in range(m):
            for b in range(m):
                Hl[a, b] = H[a, b]
            Hl[a, a] += lam
        delta = np.linalg.solve(Hl, grad.T).T
        obj_try = 0.0
        dsq = 0.0
        J_try = np.empty((k, m))
        r_try = np.empty(k)
        for i in range(k):
            acc = 0.0
            for j in range(m):
                J_try[i, j] = J[i, j] - delta[i, j]
                dsq += delta[i, j] * delta[i, j]
                acc += J_try[i, j] * dr[j]
            r_try[i] = acc - df[i]
            obj_try += r_try[i] * r_try[i]
        for i in range(k):
            for j in range(m):
                d = J_try[i, j] - J0[i, j]
                obj_try += mu * d * d
        if np.sqrt(dsq) <= step_stop:
            # The remaining move is below resolution; take it and finish.
            for i in range(k):
                r[i] = r_try[i]
                for j in range(m):
                    J[i, j] = J_try[i, j]
            converged = True
            break
        # Damped steps are true descent steps on this convex quadratic; the
        # float-tolerance accept keeps progress going once objective
        # differences dip below resolution.
        if obj_try <= obj * (1.0 + 1e-10) + 1e-300:
            for i in range(k):
                r[i] = r_try[i]
                for j in range(m):
                    J[i, j] = J_try[i, j]
            obj = obj_try
            lam *= 0.25
        else:
            lam *= 4.0
            if lam > 1e15 * sigma:
                break
    return J, it, converged
