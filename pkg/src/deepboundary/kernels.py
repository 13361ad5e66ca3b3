"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; the
numpy/python fallback is always available. Setting DEEPBOUNDARY_PURE=1 in
the environment forces the fallback (useful for the backend benchmark and
for debugging).
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on the build
    _kernels = None

if _kernels is not None and not os.environ.get("DEEPBOUNDARY_PURE"):
    _active = _kernels
else:
    _active = _kernels_py

interp_block = _active.interp_block
thin = _active.thin
affinity_lines = _active.affinity_lines


def backend_name() -> str:
    return _active.BACKEND


def available_backends() -> dict[str, object]:
    """Name -> module for every importable backend (for tests/benchmarks)."""
    out: dict[str, object] = {"python": _kernels_py}
    if _kernels is not None:
        out["compiled"] = _kernels
    return out
