"""Kernel backend selection.

Prefers the compiled extension when it imports cleanly; otherwise the numpy
reference implementation. Set LAYERSEG_BACKEND=python or =cython to force a
choice (forcing cython raises if the extension is missing).
"""

import os

from . import _kernels_py

_FORCED = os.environ.get("LAYERSEG_BACKEND", "").strip().lower()

_impl = None
_name = "python"

if _FORCED == "python":
    _impl = _kernels_py
elif _FORCED == "cython":
    from . import _kernels_cy as _impl_mod  # ImportError here is intentional
    _impl = _impl_mod
    _name = "cython"
elif _FORCED:
    raise ValueError(f"unknown LAYERSEG_BACKEND value: {_FORCED!r}")
else:
    try:
        from . import _kernels_cy as _impl_mod
        _impl = _impl_mod
        _name = "cython"
    except ImportError:
        _impl = _kernels_py

row_conv_diff = _impl.row_conv_diff
row_conv_diff_adjoint = _impl.row_conv_diff_adjoint
conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward


def backend_name() -> str:
    """Name of the active kernel backend ('cython' or 'python')."""
    return _name


def available_backends() -> list[str]:
    names = ["python"]
    try:
        from . import _kernels_cy  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    return names
