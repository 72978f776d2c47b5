"""Numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time from the ILTW_KERNELS environment
variable: "numba" forces the JIT kernels, "numpy" forces the reference
implementations, and "auto" (the default) uses numba when it is importable.
Both backends implement the same contracts on float64 arrays; results agree
to the last few ulps (transcendentals may differ by ~1e-15 relative).
"""

import os

import numpy as np

_choice = os.environ.get("ILTW_KERNELS", "auto").lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"ILTW_KERNELS must be one of auto, numba, numpy; got {_choice!r}"
    )

if _choice == "numpy":
    from iltw.kernels import reference as _impl

    _BACKEND = "numpy"
else:
    try:
        from iltw.kernels import jit as _impl

        _BACKEND = "numba"
    except ImportError:
        if _choice == "numba":
            raise
        from iltw.kernels import reference as _impl

        _BACKEND = "numpy"

softmax_xent_rows = _impl.softmax_xent_rows
squared_error_rows = _impl.squared_error_rows
uncertainty_weight_rows = _impl.uncertainty_weight_rows
sparse_momentum_update = _impl.sparse_momentum_update


def backend_name() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return _BACKEND


def warmup() -> None:
    """Run each kernel once on tiny inputs to trigger JIT compilation.

    A no-op cost on the numpy backend; on the numba backend this front-loads
    compilation so timed sections measure steady-state execution.
    """
    softmax_xent_rows(np.zeros((2, 3)), np.zeros(2, dtype=np.int64))
    squared_error_rows(np.zeros((2, 2)), np.zeros((2, 2)))
    uncertainty_weight_rows(np.zeros(2), np.zeros(2), 0.5)
    sparse_momentum_update(
        np.zeros((2, 1)), np.zeros((2, 1)),
        np.zeros(1, dtype=np.int64), 0, np.zeros(1), 1.0, 0.9, -4.0, 4.0,
    )
