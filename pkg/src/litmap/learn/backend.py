"""Tree-grower backend selection.

The compiled Cython kernel is preferred; the pure-numpy fallback implements
the identical contract (see _pytree.py).  Set LITMAP_PURE_PYTHON=1 to force
the fallback, e.g. for the backend-comparison benchmark.
"""

from __future__ import annotations

import os

from . import _pytree

if os.environ.get("LITMAP_PURE_PYTHON", "") not in ("", "0"):
    grow_tree = _pytree.grow_tree
    _BACKEND = "python"
else:
    try:
        from . import _tree_kernel

        grow_tree = _tree_kernel.grow_tree
        _BACKEND = "compiled"
    except ImportError:
        grow_tree = _pytree.grow_tree
        _BACKEND = "python"


def backend_name() -> str:
    return _BACKEND
