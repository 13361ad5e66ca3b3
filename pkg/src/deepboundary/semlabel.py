"""Attach object-class labels to boundary pixels.

Labels come either from a per-class probability stack (channel 0 is
background) or from a dense segmentation raster. Both variants inspect a
small odd-sized window around each boundary pixel, clamped at image
borders, never wrapped.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import maximum_filter


def _check_grid(grid: int) -> int:
    if grid < 1 or grid % 2 == 0:
        raise ValueError(f"grid must be odd and positive, got {grid}")
    return grid


def label_with_probs(bvals, probs, grid: int = 9, bthresh: float = 0.4):
    """Label boundary pixels by the class whose windowed max probability wins.

    probs is [C+1, H, W] with channel 0 = background; a background win
    labels the pixel 0. Ties go to the lowest class index. Returns
    (labels int32, confidence float32) where confidence carries the
    boundary value on labeled pixels and 0 elsewhere.
    """
    _check_grid(grid)
    bmap = np.asarray(bvals, dtype=np.float32)
    stack = np.asarray(probs, dtype=np.float32)
    if stack.ndim != 3 or stack.shape[0] < 2:
        raise ValueError("probability stack must be [C+1, H, W] with C >= 1")
    if stack.shape[1:] != bmap.shape:
        raise ValueError(
            f"probability dims {stack.shape[1:]} do not match boundary "
            f"dims {bmap.shape}")
    support = bmap > bthresh
    # A max filter with edge replication equals the max over the clamped
    # window: replicated values already occur inside the intersection.
    win_max = np.stack([maximum_filter(ch, size=grid, mode="nearest")
                        for ch in stack])
    winner = np.argmax(win_max, axis=0)
    labels = np.where(support, winner, 0).astype(np.int32)
    conf = np.where(support, bmap, 0.0).astype(np.float32)
    return labels, conf


def label_with_segmentation(bvals, seg, grid: int = 9, bthresh: float = 0.4):
    """Label boundary pixels by the most frequent non-background class in
    the window (mode). All-background windows label 0; ties go to the
    lowest class index."""
    _check_grid(grid)
    bmap = np.asarray(bvals, dtype=np.float32)
    seg = np.asarray(seg).astype(np.int64)
    if seg.shape != bmap.shape:
        raise ValueError(
            f"segmentation dims {seg.shape} do not match boundary dims {bmap.shape}")
    if seg.min() < 0:
        raise ValueError("segmentation labels must be non-negative")
    support = bmap > bthresh
    h, w = bmap.shape
    half = grid // 2
    class_ids = [c for c in np.unique(seg) if c != 0]
    labels = np.zeros((h, w), dtype=np.int32)
    if class_ids and support.any():
        # Windowed counts per class via integral images, evaluated at the
        # clamped window corners of every supported pixel.
        ys, xs = np.nonzero(support)
        top = np.maximum(ys - half, 0)
        bot = np.minimum(ys + half + 1, h)
        left = np.maximum(xs - half, 0)
        right = np.minimum(xs + half + 1, w)
        best_count = np.zeros(len(ys), dtype=np.int64)
        best_class = np.zeros(len(ys), dtype=np.int32)
        for cls in class_ids:
            integral = np.zeros((h + 1, w + 1), dtype=np.int64)
            integral[1:, 1:] = np.cumsum(np.cumsum(seg == cls, axis=0), axis=1)
            counts = (integral[bot, right] - integral[top, right]
                      - integral[bot, left] + integral[top, left])
            better = counts > best_count
            best_count = np.where(better, counts, best_count)
            best_class = np.where(better, np.int32(cls), best_class)
        labels[ys, xs] = np.where(best_count > 0, best_class, 0)
    conf = np.where(support, bmap, 0.0).astype(np.float32)
    return labels, conf
