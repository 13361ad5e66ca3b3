"""Dense boundary probability maps assembled from per-candidate predictions."""

from __future__ import annotations

import numpy as np

from .candidates import CandidateSet


def assemble(preds, cands: CandidateSet, dims=None) -> np.ndarray:
    """Write each prediction at its candidate's rounded pixel.

    Collisions (possible with imported candidate files) keep the maximum;
    pixels without a candidate stay 0. Rounding is floor(v + 0.5).
    """
    preds = np.asarray(preds, dtype=np.float64)
    if len(preds) != len(cands):
        raise ValueError(f"{len(preds)} predictions for {len(cands)} candidates")
    if len(preds) and (preds.min() < 0 or preds.max() > 1):
        raise ValueError("predictions must lie in [0, 1]")
    h, w = dims if dims is not None else cands.image_dims
    out = np.zeros((h, w), dtype=np.float32)
    rows = np.floor(cands.ys + 0.5).astype(np.int64)
    cols = np.floor(cands.xs + 0.5).astype(np.int64)
    if len(rows) and (rows.min() < 0 or rows.max() >= h
                      or cols.min() < 0 or cols.max() >= w):
        raise ValueError("a candidate rounds outside the output dims")
    np.maximum.at(out, (rows, cols), preds.astype(np.float32))
    return out


def _axis_blocks(src: int, dst: int) -> list[tuple[int, int]]:
    """Source index range covered by each target pixel (positive overlap)."""
    scale = src / dst
    blocks = []
    for t in range(dst):
        lo = int(np.floor(t * scale))
        hi = int(np.ceil((t + 1) * scale))
        blocks.append((lo, min(hi, src)))
    return blocks


def downscale(values, target_dims) -> np.ndarray:
    """Max-pool a map onto smaller dims; the pre-image of each target pixel
    is every source pixel its footprint overlaps. Max keeps thin boundaries
    and preserves the global maximum."""
    vals = np.asarray(values, dtype=np.float32)
    h, w = vals.shape
    th, tw = int(target_dims[0]), int(target_dims[1])
    if th < 1 or tw < 1:
        raise ValueError(f"bad target dims {target_dims}")
    if th > h or tw > w:
        raise ValueError(f"target {target_dims} exceeds source {(h, w)}")
    if (th, tw) == (h, w):
        return vals.copy()
    rows = np.empty((th, w), dtype=np.float32)
    for t, (lo, hi) in enumerate(_axis_blocks(h, th)):
        rows[t] = vals[lo:hi].max(axis=0)
    out = np.empty((th, tw), dtype=np.float32)
    for t, (lo, hi) in enumerate(_axis_blocks(w, tw)):
        out[:, t] = rows[:, lo:hi].max(axis=1)
    return out


def decimated_dims(dims, longest: int) -> tuple[int, int]:
    """Scale dims down so the longest side is at most `longest`."""
    h, w = dims
    side = max(h, w)
    if side <= longest:
        return (h, w)
    s = longest / side
    return (max(1, round(h * s)), max(1, round(w * s)))
