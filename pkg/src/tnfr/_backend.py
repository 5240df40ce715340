"""Kernel backend selection.

The compiled extension is preferred; set ``TNFR_PURE_PYTHON=1`` to force the
pure-Python kernels (same algorithms, slower).
"""
from __future__ import annotations

import os

if os.environ.get("TNFR_PURE_PYTHON", "") not in ("", "0"):
    from . import _fallback as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _fallback as kernels

BACKEND: str = kernels.NAME

__all__ = ["kernels", "BACKEND"]
