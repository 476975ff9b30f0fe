"""Kernel backend selection.

The compiled extension is used when it imports; setting
``KBFOLLOW_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("KBFOLLOW_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"


def available_backends():
    names = {"python": _kernels_py}
    try:
        from . import _kernels as compiled

        names["cython"] = compiled
    except ImportError:
        pass
    return names


def use_backend(name):
    """Switch the active kernel implementation (``"cython"`` or ``"python"``)."""
    global _impl, BACKEND
    backends = available_backends()
    if name not in backends:
        raise ValueError(f"kernel backend {name!r} is not available")
    _impl = backends[name]
    BACKEND = name


def left_matmul(rows, cols, vals, x, out):
    _impl.left_matmul(rows, cols, vals, x, out)


def right_matmul(rows, cols, vals, x, out):
    _impl.right_matmul(rows, cols, vals, x, out)
