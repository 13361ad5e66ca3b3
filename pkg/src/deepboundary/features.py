"""Per-candidate descriptor interpolation from a feature stack.

Every layer is visited exactly once (layer-major streaming), so peak memory
is a single layer plus the output matrix. Coordinates use pixel-center
alignment: working-image point (y, x) lands at layer coordinates
((y + 0.5) * h / H - 0.5, (x + 0.5) * w / W - 0.5), clamped to the layer.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .candidates import CandidateSet
from .tensor_io import FeatureStack, LayerSpec

MODES = ("bilinear", "uniform4")


def map_point(y: float, x: float, layer_dims, input_dims) -> tuple[float, float]:
    """Map one working-image point into a layer's coordinate frame."""
    h, w = layer_dims
    big_h, big_w = input_dims
    row = (y + 0.5) * h / big_h - 0.5
    col = (x + 0.5) * w / big_w - 0.5
    return (min(max(row, 0.0), h - 1.0), min(max(col, 0.0), w - 1.0))


def map_points(ys, xs, layer_dims, input_dims) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized map_point over candidate arrays."""
    h, w = layer_dims
    big_h, big_w = input_dims
    rows = (np.asarray(ys, dtype=np.float64) + 0.5) * (h / big_h) - 0.5
    cols = (np.asarray(xs, dtype=np.float64) + 0.5) * (w / big_w) - 0.5
    np.clip(rows, 0.0, h - 1.0, out=rows)
    np.clip(cols, 0.0, w - 1.0, out=cols)
    return rows, cols


@dataclass
class DescriptorMatrix:
    """Rows = candidates (in candidate order), columns = stack channels."""

    values: np.ndarray  # float32 [n, channels]
    layers: list[LayerSpec]

    @property
    def layer_offsets(self) -> np.ndarray:
        offs = np.zeros(len(self.layers) + 1, dtype=np.int64)
        for i, spec in enumerate(self.layers):
            offs[i + 1] = offs[i] + spec.channels
        return offs

    def layer_slices(self) -> list[tuple[str, int, int]]:
        offs = self.layer_offsets
        return [(spec.name, int(offs[i]), int(offs[i + 1]))
                for i, spec in enumerate(self.layers)]


def _check_mode(mode: str) -> bool:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode == "bilinear"


def interpolate_descriptor(stack: FeatureStack, y: float, x: float,
                           mode: str = "bilinear") -> np.ndarray:
    """Descriptor for a single point: per-layer cell-corner sampling."""
    bilinear = _check_mode(mode)
    blocks = []
    for i, spec in enumerate(stack.layers):
        data = stack.layer_array(i)
        rows, cols = map_points([y], [x], (spec.height, spec.width),
                                stack.input_dims)
        out = np.empty((1, spec.channels), dtype=np.float32)
        kernels.interp_block(data, rows, cols, bilinear, out)
        blocks.append(out[0])
    return np.concatenate(blocks)


def batch_descriptors(stack: FeatureStack, cands: CandidateSet,
                      mode: str = "bilinear", jobs: int = 1) -> DescriptorMatrix:
    """Descriptors for every candidate with a single pass over the stack.

    With jobs > 1, candidates are split into contiguous chunks handled by
    worker threads writing disjoint rows; results are identical to jobs=1.
    """
    bilinear = _check_mode(mode)
    n = len(cands)
    total = stack.total_channels
    out = np.empty((n, total), dtype=np.float32)
    offset = 0
    for i, spec in enumerate(stack.layers):
        data = stack.layer_array(i)
        rows, cols = map_points(cands.ys, cands.xs,
                                (spec.height, spec.width), stack.input_dims)
        block = out[:, offset:offset + spec.channels]
        if jobs <= 1 or n < 2 * jobs:
            kernels.interp_block(data, rows, cols, bilinear, block)
        else:
            bounds = np.linspace(0, n, jobs + 1, dtype=np.int64)
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                futures = [
                    pool.submit(kernels.interp_block, data,
                                rows[a:b], cols[a:b], bilinear, block[a:b])
                    for a, b in zip(bounds[:-1], bounds[1:]) if b > a
                ]
                for fut in futures:
                    fut.result()
        offset += spec.channels
        del data
    return DescriptorMatrix(out, list(stack.layers))
