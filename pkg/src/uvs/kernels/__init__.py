"""Hot-kernel dispatch: numba-compiled by default, pure numpy on request.

Set ``UVS_BACKEND=numpy`` to force the pure-numpy path (e.g. when numba is
unavailable or for debugging), or ``UVS_BACKEND=numba`` to fail loudly if the
compiled path cannot load. Unset, the compiled path is used when importable.
"""

import os

from .reference import BEHIND_EPS

_requested = os.environ.get("UVS_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ValueError(f"UVS_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numpy":
    from . import reference as _impl

    BACKEND = "numpy"
else:
    try:
        from . import jit as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import reference as _impl

        BACKEND = "numpy"

project_points = _impl.project_points
lm_track_update = _impl.lm_track_update

__all__ = ["BACKEND", "BEHIND_EPS", "project_points", "lm_track_update"]
