"""Backend selection for the numeric kernels.

The compiled extension is used when it was built; otherwise the pure-Python
module. Set ``FATNODE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

MEMORY = _kernels_py.MEMORY
THREADS = _kernels_py.THREADS
TPC_CAP = _kernels_py.TPC_CAP

_compiled = None
if os.environ.get("FATNODE_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _kernels_py

core_rate_sum = _impl.core_rate_sum
evaluate_grid = _impl.evaluate_grid


def get_backend(name):
    """Return the kernel module for ``name`` ("python" or "cython")."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def compiled_available():
    return _compiled is not None
