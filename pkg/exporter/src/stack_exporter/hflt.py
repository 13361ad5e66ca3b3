"""Writer for the HFLT stack interchange format.

One float32 little-endian tensor per file::

    magic 'HFLT' | version u32=1 | ndim u32 | dims u32*ndim | dtype u32=1 | data

A stack directory holds a UTF-8 manifest (first line ``input <h> <w>``, then
one ``name channels height width`` record per layer) next to the per-layer
``<name>.hflt`` files.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"HFLT"
VERSION = 1
DTYPE_F32 = 1


def write_tensor(array: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim < 1 or any(d < 1 for d in arr.shape):
        raise ValueError(f"bad tensor shape {arr.shape}")
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", MAGIC, VERSION, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(struct.pack("<I", DTYPE_F32))
        f.write(arr.tobytes(order="C"))


def write_stack_manifest(path, input_dims, layers) -> None:
    """layers: iterable of (name, channels, height, width)."""
    lines = [f"input {input_dims[0]} {input_dims[1]}"]
    lines += [f"{n} {c} {h} {w}" for n, c, h, w in layers]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
