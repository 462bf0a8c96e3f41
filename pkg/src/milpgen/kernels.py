"""Kernel dispatch: the compiled core when importable, else the Python fallback.

Set ``MILPGEN_PURE=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("MILPGEN_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels

bipartite_clustering = _impl.bipartite_clustering
greedy_modularity = _impl.greedy_modularity
