"""Kernel dispatch: the Cython build when available, numpy otherwise.

Set ``GRAPHSPOT_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("GRAPHSPOT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

norm_adjacency = _impl.norm_adjacency
nms_1d = _impl.nms_1d
greedy_match = _impl.greedy_match
nms_order = _impl.nms_order
