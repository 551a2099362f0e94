"""Hot-kernel dispatch: the compiled extension when importable, else Python.

Set ``IMPFLOW_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("IMPFLOW_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

kmeans1d = _impl.kmeans1d
maxmin_fair = _impl.maxmin_fair
unsplittable_search = _impl.unsplittable_search

__all__ = ["BACKEND", "kmeans1d", "maxmin_fair", "unsplittable_search"]
