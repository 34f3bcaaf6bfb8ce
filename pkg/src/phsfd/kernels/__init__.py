"""Weight-row kernels with a compiled core and a NumPy fallback.

The compiled extension is preferred when importable; set the environment
variable PHSFD_NO_EXTENSION=1 to force the NumPy path.  Both implement the
contract documented in :mod:`phsfd.kernels._core_np`.
"""

import os

import numpy as np

from . import _core_np
from ._core_np import OP_DIRECTIONAL, OP_EVAL, OP_LAPLACIAN

if os.environ.get("PHSFD_NO_EXTENSION"):
    _impl = _core_np
    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _core_np
        BACKEND = "numpy"


def operator_rows(points, stencil_ids, node_coords, kmats, shifts, scales,
                  exponents, op_code, directions=None, impl=None):
    """Compute stencil weight rows for a batch of evaluation points.

    Returns an (M, n) array; row i holds the weights of evaluation point i
    with respect to its stencil's nodes.  ``impl`` overrides the backend
    module (used by tests and benchmarks).
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    stencil_ids = np.ascontiguousarray(stencil_ids, dtype=np.int64)
    total, dim = points.shape
    if directions is None:
        if op_code == OP_DIRECTIONAL:
            raise ValueError("directional operator needs directions")
        directions = np.zeros((total, dim))
    directions = np.ascontiguousarray(directions, dtype=np.float64)
    out = np.empty((total, node_coords.shape[1]))
    mod = impl if impl is not None else _impl
    mod.operator_rows(points, stencil_ids, node_coords, kmats, shifts, scales,
                      exponents, op_code, directions, out)
    return out
