"""Kernel backend selection.

The compiled grid nearest-neighbour kernel is used when available; setting
``CRANIOMORPH_PURE=1`` (or a failed extension build) selects the pure numpy
twin. Both implement the identical algorithm and return identical results.
"""

import os

if os.environ.get("CRANIOMORPH_PURE", "").strip() not in ("", "0"):
    from . import fallback as _impl
else:
    try:
        from . import _gridnn as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import fallback as _impl

nearest_batch = _impl.nearest_batch
BACKEND = _impl.BACKEND


def backend_name():
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return BACKEND
