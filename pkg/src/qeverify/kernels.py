"""Curvature kernel selection: compiled extension when importable, numpy otherwise.

Set ``QEVERIFY_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _kernels_py

IMPLEMENTATION = "python"
_compiled = None

if os.environ.get("QEVERIFY_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled

        IMPLEMENTATION = "compiled"
    except ImportError:  # extension not built
        _compiled = None


def curvature(ginv, dg, ddg, implementation=None):
    """Return ``(gamma, ricci, scalar)``; see ``_kernels_py.curvature``."""
    impl = implementation or IMPLEMENTATION
    if impl == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled.curvature(
            np.ascontiguousarray(ginv, dtype=float),
            np.ascontiguousarray(dg, dtype=float),
            np.ascontiguousarray(ddg, dtype=float),
        )
    return _kernels_py.curvature(ginv, dg, ddg)


def available():
    return ["python"] + (["compiled"] if _compiled is not None else [])
