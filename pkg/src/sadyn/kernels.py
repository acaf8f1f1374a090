"""Kernel dispatch: the compiled module when available, numpy otherwise.

Set ``SADYN_PURE_PYTHON=1`` to force the numpy implementation.
"""

from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("SADYN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

reduce_batch = _impl.reduce_batch
hecke_batch = _impl.hecke_batch

__all__ = ["BACKEND", "reduce_batch", "hecke_batch"]
