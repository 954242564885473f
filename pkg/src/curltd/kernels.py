"""Kernel backend selection.

Assembly inner loops live in two interchangeable modules: the compiled
extension `_kernels` and the pure-NumPy `_kernels_py`. The compiled lane
is preferred when it imported cleanly; setting CURLTD_NO_EXT=1 (or a
failed build) falls back to NumPy. `get_backend` exposes both lanes so
tests and benchmarks can compare them directly.
"""

from __future__ import annotations

import os

from . import _kernels_py

_impl = _kernels_py
BACKEND = "python"

if not os.environ.get("CURLTD_NO_EXT"):
    try:
        from . import _kernels as _ext
    except ImportError:
        pass
    else:
        _impl = _ext
        BACKEND = "compiled"

tet_geometry = _impl.tet_geometry
whitney_blocks = _impl.whitney_blocks
gather_curls = _impl.gather_curls
residual_accumulate = _impl.residual_accumulate
jacobian_values = _impl.jacobian_values


def get_backend(name):
    """Return a kernel module by name: 'python', 'compiled', or 'active'."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels  # raises ImportError if not built
        return _kernels
    if name == "active":
        return _impl
    raise ValueError(f"unknown kernel backend {name!r}")
