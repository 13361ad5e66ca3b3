"""Candidate contour points: proxy detector, thinning, selection.

The candidate source is deliberately replaceable. The built-in proxy is a
3x3 central-difference gradient magnitude; an externally produced edge map
can be imported instead and pushed through the same thinning/selection.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass
class CandidateSet:
    """Sub-pixel candidate points in working-image coordinates.

    Stored sorted by score descending (ties in row-major pixel order).
    x is the column coordinate, y the row; pixel centers sit at integers.
    """

    ys: np.ndarray
    xs: np.ndarray
    scores: np.ndarray
    image_dims: tuple[int, int]

    def __post_init__(self):
        self.ys = np.asarray(self.ys, dtype=np.float64)
        self.xs = np.asarray(self.xs, dtype=np.float64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        h, w = self.image_dims
        if len(self.ys) != len(self.xs) or len(self.ys) != len(self.scores):
            raise ValueError("candidate arrays must have equal length")
        if len(self.ys) and (self.ys.min() < 0 or self.ys.max() >= h
                             or self.xs.min() < 0 or self.xs.max() >= w):
            raise ValueError("candidate coordinates fall outside the image")
        if len(self.scores) and (self.scores.min() < 0 or self.scores.max() > 1):
            raise ValueError("proxy scores must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.ys)


def gradient_proxy(image) -> np.ndarray:
    """3x3 central-difference gradient magnitude, normalized to max 1.

    Borders use clamped (replicated) indexing. A constant image maps to
    all zeros.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError(f"image must be at least 3x3, got shape {img.shape}")
    padded = np.pad(img, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    mag = np.sqrt(gx * gx + gy * gy)
    peak = mag.max()
    if peak > 0:
        mag /= peak
    return mag.astype(np.float32)


def nms_thin(values) -> np.ndarray:
    """Thin a boundary map to 1-px ridges; survivors keep their values."""
    return kernels.thin(np.asarray(values, dtype=np.float32))


def select_candidates(values, threshold: float = 0.05,
                      max_count: int = 20000) -> CandidateSet:
    """Pixels with value > threshold, by score descending, capped at max_count.

    Expects a thinned map. Ties are broken in row-major pixel order;
    coordinates are pixel centers.
    """
    vals = np.asarray(values, dtype=np.float64)
    h, w = vals.shape
    flat = vals.ravel()
    keep = np.nonzero(flat > threshold)[0]
    # Stable sort on -value keeps row-major order within ties.
    order = np.argsort(-flat[keep], kind="stable")
    keep = keep[order][:max_count]
    rows, cols = np.divmod(keep, w)
    return CandidateSet(rows.astype(np.float64), cols.astype(np.float64),
                        flat[keep], (h, w))


def save_candidates_csv(cands: CandidateSet, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["x", "y", "score"])
        for x, y, s in zip(cands.xs, cands.ys, cands.scores):
            writer.writerow([f"{x:.6f}", f"{y:.6f}", f"{s:.6f}"])


def load_candidates_csv(path, image_dims) -> CandidateSet:
    xs, ys, scores = [], [], []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.reader(f):
            if not row or row[0].strip() in ("", "x"):
                continue
            xs.append(float(row[0]))
            ys.append(float(row[1]))
            scores.append(float(row[2]) if len(row) > 2 else 1.0)
    return CandidateSet(np.asarray(ys), np.asarray(xs), np.asarray(scores),
                        tuple(image_dims))


def save_labels_csv(labels, path) -> None:
    """Single-column agreement labels, row-aligned with a candidates CSV."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["label"])
        for v in np.asarray(labels, dtype=np.float64):
            writer.writerow([f"{v:.6f}"])


def load_labels_csv(path) -> np.ndarray:
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.reader(f):
            if not row or row[0].strip() in ("", "label"):
                continue
            out.append(float(row[0]))
    return np.asarray(out, dtype=np.float64)


def detect_candidates(image=None, imported_map=None, threshold: float = 0.05,
                      max_count: int = 20000) -> CandidateSet:
    """Full candidate front end: proxy (or imported map) -> thin -> select."""
    if imported_map is not None:
        raw = np.asarray(imported_map, dtype=np.float32)
    elif image is not None:
        raw = gradient_proxy(image)
    else:
        raise ValueError("need an image or an imported boundary map")
    return select_candidates(nms_thin(raw), threshold, max_count)
