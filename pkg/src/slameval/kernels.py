"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``SLAMEVAL_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

try:
    if os.environ.get("SLAMEVAL_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend forced")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

backend = _compiled if _compiled is not None else _kernels_py
BACKEND_NAME = "compiled" if _compiled is not None else "python"

cross_covariance = backend.cross_covariance
residual_norms = backend.residual_norms
relative_errors = backend.relative_errors
