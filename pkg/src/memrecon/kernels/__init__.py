"""Backend selection for the hot numeric kernels.

The numba backend is used when available; set MEMRECON_BACKEND=numpy to
force the pure-numpy fallback (or =numba to fail loudly if numba is
missing). ``benchmarks/bench_kernels.py`` times the two side by side.
"""

import os

from . import numpy_backend

GAUSSIAN = numpy_backend.GAUSSIAN
POISSON = numpy_backend.POISSON
EXPONENTIAL = numpy_backend.EXPONENTIAL
UNIFORM = numpy_backend.UNIFORM
TWO_POINT = numpy_backend.TWO_POINT

_requested = os.environ.get("MEMRECON_BACKEND", "auto").lower()

if _requested not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"MEMRECON_BACKEND must be auto, numba or numpy, got {_requested!r}")

if _requested == "numpy":
    _impl = numpy_backend
    BACKEND_NAME = "numpy"
else:
    try:
        from . import numba_backend as _impl

        BACKEND_NAME = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        _impl = numpy_backend
        BACKEND_NAME = "numpy"

log_mgf = _impl.log_mgf
log_mgf_deriv = _impl.log_mgf_deriv
log_mgf_second = _impl.log_mgf_second
weighted_logmgf_value = _impl.weighted_logmgf_value
weighted_logmgf_sums = _impl.weighted_logmgf_sums
transform_weights = _impl.transform_weights
conjugate_value_batch = _impl.conjugate_value_batch
box_residual_min = _impl.box_residual_min
