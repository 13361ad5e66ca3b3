"""Pure-python/numpy fallback for the hot kernels.

Mirrors the compiled extension in `_kernels.pyx` operation for operation.
Results must agree with the compiled backend: interpolation to float32
rounding, affinity weights and thinning bit for bit. The final exp() of the
affinity weight goes through libm on doubles in both backends so that the
two never drift by a unit in the last place.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from . import stencils

BACKEND = "python"


def interp_block(data, rows, cols, bilinear, out):
    """Sample one layer at fractional (row, col) positions for all candidates.

    data: float32 [C, h, w]; rows/cols: float64 [n] already clamped to the
    layer; out: float32 view [n, C] receiving the per-candidate block.
    Corners are the enclosing cell (floor/ceil, duplicated when integral);
    weights are bilinear or uniform 1/4. Accumulation is in float64.
    """
    c_count, h, w = data.shape
    r0 = np.floor(rows).astype(np.int64)
    r1 = np.ceil(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    c1 = np.ceil(cols).astype(np.int64)
    if bilinear:
        fr = rows - r0
        fc = cols - c0
        w00 = (1.0 - fr) * (1.0 - fc)
        w01 = (1.0 - fr) * fc
        w10 = fr * (1.0 - fc)
        w11 = fr * fc
    else:
        quarter = np.full(rows.shape, 0.25)
        w00 = w01 = w10 = w11 = quarter
    flat = data.reshape(c_count, h * w)
    g00 = flat[:, r0 * w + c0].astype(np.float64)
    g01 = flat[:, r0 * w + c1].astype(np.float64)
    g10 = flat[:, r1 * w + c0].astype(np.float64)
    g11 = flat[:, r1 * w + c1].astype(np.float64)
    block = g00 * w00 + g01 * w01 + g10 * w10 + g11 * w11
    out[:, :] = block.T.astype(np.float32)


def thin(values):
    """Ordered morphological thinning to 1-px ridges.

    Deletable pixels (per the shared (8,4) simple-point table) are removed
    highest value first, ties in row-major order, until no pixel is
    deletable. Survivors keep their values.
    """
    vals = np.ascontiguousarray(values, dtype=np.float32)
    h, w = vals.shape
    lut = stencils.deletable_lut()
    fg = vals > 0

    def pattern(r, c):
        bits = 0
        for i, (dr, dc) in enumerate(stencils.NEIGHBORS8):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and fg[rr, cc]:
                bits |= 1 << i
        return bits

    heap = [(-float(vals[r, c]), r * w + c) for r, c in np.argwhere(fg)]
    heapq.heapify(heap)
    while heap:
        _, idx = heapq.heappop(heap)
        r, c = divmod(idx, w)
        if not fg[r, c]:
            continue
        if not lut[pattern(r, c)]:
            continue
        fg[r, c] = False
        for dr, dc in stencils.NEIGHBORS8:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and fg[rr, cc]:
                heapq.heappush(heap, (-float(vals[rr, cc]), rr * w + cc))
    out = np.where(fg, vals, np.float32(0.0))
    return out.astype(np.float32)


def affinity_lines(bmap, offsets, paths, sigma):
    """Intervening-contour weights for every in-grid pair at the given offsets.

    For each half-stencil offset (dy, dx) and every start pixel whose partner
    is in bounds, the weight is exp(-(m / sigma)^2) with m the max of the map
    along the precomputed Bresenham path. Returns (ii, jj, ww) with ii < jj,
    offset-major and row-major within an offset.
    """
    vals = np.ascontiguousarray(bmap, dtype=np.float32)
    h, w = vals.shape
    ii_parts, jj_parts, ww_parts = [], [], []
    for (dy, dx), path in zip(offsets, paths):
        if dy >= h or abs(dx) >= w:
            continue
        rows = h - dy
        c_lo = max(0, -dx)
        c_hi = w - max(0, dx)
        if c_hi <= c_lo:
            continue
        cols = c_hi - c_lo
        m = np.zeros((rows, cols), dtype=np.float32)
        for pdy, pdx in path:
            np.maximum(m, vals[pdy:pdy + rows, c_lo + pdx:c_lo + pdx + cols], out=m)
        r_idx, c_idx = np.meshgrid(np.arange(rows), np.arange(c_lo, c_hi),
                                   indexing="ij")
        i = (r_idx * w + c_idx).ravel().astype(np.int64)
        j = ((r_idx + dy) * w + (c_idx + dx)).ravel().astype(np.int64)
        # Scalar libm exp keeps weights bit-identical to the compiled path.
        flat = m.ravel()
        ww = np.empty(flat.shape[0], dtype=np.float64)
        for k in range(flat.shape[0]):
            t = float(flat[k]) / sigma
            ww[k] = math.exp(-t * t)
        ii_parts.append(i)
        jj_parts.append(j)
        ww_parts.append(ww)
    if not ii_parts:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), np.empty(0, dtype=np.float64)
    return (np.concatenate(ii_parts), np.concatenate(jj_parts),
            np.concatenate(ww_parts))
