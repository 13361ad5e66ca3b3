"""Lattice stencils shared by the compiled and pure-python kernels.

Everything in here is deterministic table construction: line rasterizations,
neighborhood disks, and the 3x3 deletability table used by morphological
thinning. Keeping these in one place guarantees both kernel backends walk
exactly the same pixels.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

# 8-neighborhood in fixed bit order (bit i set <=> neighbor i is foreground).
NEIGHBORS8 = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)


def bresenham_path(dy: int, dx: int) -> np.ndarray:
    """Integer Bresenham rasterization of the segment (0,0) -> (dy,dx).

    Returns an int32 array of shape [m, 2] of (dr, dc) steps, endpoints
    included. The path depends only on the offset, so it can be reused for
    every pixel pair with the same displacement.
    """
    points = []
    y, x = 0, 0
    sy = 1 if dy > 0 else -1
    sx = 1 if dx > 0 else -1
    ady, adx = abs(dy), abs(dx)
    err = adx - ady
    while True:
        points.append((y, x))
        if y == dy and x == dx:
            break
        e2 = 2 * err
        if e2 > -ady:
            err -= ady
            x += sx
        if e2 < adx:
            err += adx
            y += sy
    return np.asarray(points, dtype=np.int32)


def supercover_path(a: tuple[int, int], b: tuple[int, int]) -> list[tuple[int, int]]:
    """All pixels whose closed unit cell is touched by the segment a -> b.

    Denser than Bresenham (4-connected, includes corner grazes). Used as the
    alternative line mode for cross-checks.
    """
    (y0, x0), (y1, x1) = a, b
    pts = {(y0, x0), (y1, x1)}
    dy, dx = y1 - y0, x1 - x0
    steps = 2 * max(abs(dy), abs(dx), 1) * 8
    for k in range(steps + 1):
        t = k / steps
        y = y0 + t * dy
        x = x0 + t * dx
        ry, rx = round(y), round(x)
        for cy in (math.floor(y - 0.5), math.ceil(y - 0.5), ry):
            for cx in (math.floor(x - 0.5), math.ceil(x - 0.5), rx):
                if abs(y - cy) <= 0.5 and abs(x - cx) <= 0.5:
                    pts.add((cy, cx))
    order = sorted(pts, key=lambda p: (abs(p[0] - y0) + abs(p[1] - x0)))
    return order


def disk_offsets(radius: float, metric: str = "euclidean") -> list[tuple[int, int]]:
    """All integer offsets within `radius` of the origin, origin excluded."""
    r = int(math.floor(radius))
    out = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            if metric == "euclidean":
                if dy * dy + dx * dx <= radius * radius:
                    out.append((dy, dx))
            elif metric == "chebyshev":
                if max(abs(dy), abs(dx)) <= radius:
                    out.append((dy, dx))
            else:
                raise ValueError(f"unknown metric: {metric!r}")
    return out


def half_disk_offsets(radius: float, metric: str = "euclidean") -> list[tuple[int, int]]:
    """Canonical half of disk_offsets: (dy > 0) or (dy == 0 and dx > 0).

    Walking only these from every pixel enumerates each unordered pair once,
    always from the lower row-major index to the higher.
    """
    return [(dy, dx) for dy, dx in disk_offsets(radius, metric)
            if dy > 0 or (dy == 0 and dx > 0)]


def _ring_components(members: list[int], four_connected: bool) -> list[set[int]]:
    """Connected components among 3x3 ring positions (indices into NEIGHBORS8)."""
    unseen = set(members)
    comps = []
    while unseen:
        seed = unseen.pop()
        comp = {seed}
        frontier = [seed]
        while frontier:
            i = frontier.pop()
            yi, xi = NEIGHBORS8[i]
            for j in list(unseen):
                yj, xj = NEIGHBORS8[j]
                dy, dx = abs(yi - yj), abs(xi - xj)
                adjacent = (dy + dx == 1) if four_connected else (max(dy, dx) == 1)
                if adjacent:
                    unseen.remove(j)
                    comp.add(j)
                    frontier.append(j)
        comps.append(comp)
    return comps


@lru_cache(maxsize=1)
def deletable_lut() -> np.ndarray:
    """Per-pattern deletability for ordered thinning, as a uint8[256] table.

    A foreground pixel may be deleted when removing it preserves topology
    ((8,4) simple point: exactly one foreground 8-component in the punctured
    3x3 ring and exactly one background 4-component touching an edge-adjacent
    position) and it is not a curve endpoint (at least two foreground
    neighbors).
    """
    edge_positions = {1, 3, 4, 6}  # N, W, E, S in NEIGHBORS8 order
    lut = np.zeros(256, dtype=np.uint8)
    for pattern in range(256):
        fg = [i for i in range(8) if pattern & (1 << i)]
        bg = [i for i in range(8) if not pattern & (1 << i)]
        if len(fg) < 2:
            continue
        if len(_ring_components(fg, four_connected=False)) != 1:
            continue
        bg_comps = _ring_components(bg, four_connected=True)
        touching = [c for c in bg_comps if c & edge_positions]
        if len(touching) != 1:
            continue
        lut[pattern] = 1
    return lut
