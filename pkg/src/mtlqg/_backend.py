"""Select the numerical kernel backend at import time.

The compiled Cython extension is preferred; the pure-numpy fallback is used
when the extension is unavailable or ``MTLQG_PURE_PYTHON=1`` is set.
"""

import os

from . import _kernels_py

if os.environ.get("MTLQG_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py


def backend_name() -> str:
    """Name of the active kernel backend: 'cython' or 'python'."""
    return kernels.BACKEND
