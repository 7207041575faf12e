"""Hot per-pixel kernels with a compiled core and a NumPy fallback.

The compiled extension is selected at import time when available; set
``MAMMOFUSE_FORCE_REFERENCE=1`` to force the NumPy implementations.
``benchmarks/bench_kernels.py`` compares the two backends.
"""

from __future__ import annotations

import os

from . import reference
from .reference import LBP_OFFSETS

if os.environ.get("MAMMOFUSE_FORCE_REFERENCE"):
    _impl = reference
    BACKEND = "reference"
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        BACKEND = "native"
    except ImportError:
        _impl = reference
        BACKEND = "reference"

conv3x3_replicate = _impl.conv3x3_replicate
lbp_codes = _impl.lbp_codes
resize_bilinear = _impl.resize_bilinear


def backend_name() -> str:
    """Name of the kernel backend selected at import: native or reference."""
    return BACKEND


__all__ = [
    "BACKEND",
    "LBP_OFFSETS",
    "backend_name",
    "conv3x3_replicate",
    "lbp_codes",
    "resize_bilinear",
    "reference",
]
