# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: descriptor interpolation, ordered thinning,
intervening-contour affinity. Semantics match `_kernels_py` exactly."""

from libc.math cimport ceil, exp, floor
from libc.stdlib cimport free, malloc

import numpy as np

cimport numpy as cnp

from . import stencils

cnp.import_array()

BACKEND = "compiled"


def interp_block(float[:, :, ::1] data, double[:] rows, double[:] cols,
                 bint bilinear, float[:, :] out):
    """Sample one layer at fractional (row, col) positions for all candidates.

    out is an [n, C] float32 view (possibly a column block of a larger
    matrix). Accumulation is in float64, stored as float32.
    """
    cdef Py_ssize_t c_count = data.shape[0]
    cdef Py_ssize_t h = data.shape[1]
    cdef Py_ssize_t w = data.shape[2]
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t i, c
    cdef long[::1] r0 = np.empty(n, dtype=np.int64)
    cdef long[::1] r1 = np.empty(n, dtype=np.int64)
    cdef long[::1] c0 = np.empty(n, dtype=np.int64)
    cdef long[::1] c1 = np.empty(n, dtype=np.int64)
    cdef double[::1] w00 = np.empty(n, dtype=np.float64)
    cdef double[::1] w01 = np.empty(n, dtype=np.float64)
    cdef double[::1] w10 = np.empty(n, dtype=np.float64)
    cdef double[::1] w11 = np.empty(n, dtype=np.float64)
    cdef double fr, fc

    with nogil:
        for i in range(n):
            r0[i] = <long>floor(rows[i])
            r1[i] = <long>ceil(rows[i])
            c0[i] = <long>floor(cols[i])
            c1[i] = <long>ceil(cols[i])
            if bilinear:
                fr = rows[i] - r0[i]
                fc = cols[i] - c0[i]
                w00[i] = (1.0 - fr) * (1.0 - fc)
                w01[i] = (1.0 - fr) * fc
                w10[i] = fr * (1.0 - fc)
                w11[i] = fr * fc
            else:
                w00[i] = 0.25
                w01[i] = 0.25
                w10[i] = 0.25
                w11[i] = 0.25
        for c in range(c_count):
            for i in range(n):
                out[i, c] = <float>(
                    data[c, r0[i], c0[i]] * w00[i]
                    + data[c, r0[i], c1[i]] * w01[i]
                    + data[c, r1[i], c0[i]] * w10[i]
                    + data[c, r1[i], c1[i]] * w11[i])


cdef struct HeapEntry:
    float value
    long idx


cdef inline bint _before(HeapEntry a, HeapEntry b) nogil:
    # Max-heap on value, ties broken toward the smaller row-major index.
    if a.value != b.value:
        return a.value > b.value
    return a.idx < b.idx


cdef inline void _heap_push(HeapEntry* heap, Py_ssize_t* size, HeapEntry e) nogil:
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t parent
    heap[i] = e
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if _before(heap[i], heap[parent]):
            heap[i], heap[parent] = heap[parent], heap[i]
            i = parent
        else:
            break


cdef inline HeapEntry _heap_pop(HeapEntry* heap, Py_ssize_t* size) nogil:
    cdef HeapEntry top = heap[0]
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t child
    size[0] -= 1
    heap[0] = heap[size[0]]
    while True:
        child = 2 * i + 1
        if child >= size[0]:
            break
        if child + 1 < size[0] and _before(heap[child + 1], heap[child]):
            child += 1
        if _before(heap[child], heap[i]):
            heap[i], heap[child] = heap[child], heap[i]
            i = child
        else:
            break
    return top


def thin(values):
    """Ordered morphological thinning to 1-px ridges (see `_kernels_py.thin`)."""
    vals_arr = np.ascontiguousarray(values, dtype=np.float32)
    cdef float[:, ::1] vals = vals_arr
    cdef Py_ssize_t h = vals.shape[0]
    cdef Py_ssize_t w = vals.shape[1]
    fg_arr = np.ascontiguousarray(vals_arr > 0, dtype=np.uint8)
    cdef unsigned char[:, ::1] fg = fg_arr
    cdef const unsigned char[::1] lut = stencils.deletable_lut()
    offs = np.asarray(stencils.NEIGHBORS8, dtype=np.int64)
    cdef long[:, ::1] nb = offs
    cdef Py_ssize_t cap = 0
    cdef Py_ssize_t r, c, k, rr, cc
    cdef Py_ssize_t size = 0
    cdef HeapEntry* heap
    cdef HeapEntry e
    cdef int bits

    for r in range(h):
        for c in range(w):
            if fg[r, c]:
                cap += 1
    # Each deletion re-pushes at most 8 neighbors.
    heap = <HeapEntry*>malloc((9 * cap + 8) * sizeof(HeapEntry))
    if heap == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r in range(h):
                for c in range(w):
                    if fg[r, c]:
                        e.value = vals[r, c]
                        e.idx = r * w + c
                        _heap_push(heap, &size, e)
            while size > 0:
                e = _heap_pop(heap, &size)
                r = e.idx / w
                c = e.idx % w
                if not fg[r, c]:
                    continue
                bits = 0
                for k in range(8):
                    rr = r + nb[k, 0]
                    cc = c + nb[k, 1]
                    if 0 <= rr < h and 0 <= cc < w and fg[rr, cc]:
                        bits |= 1 << k
                if not lut[bits]:
                    continue
                fg[r, c] = 0
                for k in range(8):
                    rr = r + nb[k, 0]
                    cc = c + nb[k, 1]
                    if 0 <= rr < h and 0 <= cc < w and fg[rr, cc]:
                        e.value = vals[rr, cc]
                        e.idx = rr * w + cc
                        _heap_push(heap, &size, e)
    finally:
        free(heap)
    out = np.where(fg_arr.astype(bool), vals_arr, np.float32(0.0))
    return out.astype(np.float32)


def affinity_lines(bmap, offsets, paths, double sigma):
    """Intervening-contour weights (see `_kernels_py.affinity_lines`)."""
    vals_arr = np.ascontiguousarray(bmap, dtype=np.float32)
    cdef float[:, ::1] vals = vals_arr
    cdef Py_ssize_t h = vals.shape[0]
    cdef Py_ssize_t w = vals.shape[1]

    offs_arr = np.asarray(offsets, dtype=np.int64).reshape(-1, 2)
    cdef long[:, ::1] offs = offs_arr
    cdef Py_ssize_t n_off = offs.shape[0]
    starts = np.zeros(n_off + 1, dtype=np.int64)
    flat_parts = []
    for p in paths:
        arr = np.asarray(p, dtype=np.int64).reshape(-1, 2)
        flat_parts.append(arr)
    for k, arr in enumerate(flat_parts):
        starts[k + 1] = starts[k] + arr.shape[0]
    path_pts_arr = (np.concatenate(flat_parts, axis=0) if flat_parts
                    else np.zeros((0, 2), dtype=np.int64))
    cdef long[::1] path_starts = starts
    cdef long[:, ::1] path_pts = np.ascontiguousarray(path_pts_arr)

    # Count entries per offset to preallocate exactly.
    cdef Py_ssize_t total = 0
    cdef Py_ssize_t k2, dy, dx, rows, c_lo, c_hi
    for k2 in range(n_off):
        dy = offs[k2, 0]
        dx = offs[k2, 1]
        if dy >= h or (dx if dx >= 0 else -dx) >= w:
            continue
        rows = h - dy
        c_lo = 0 if dx >= 0 else -dx
        c_hi = w - (dx if dx >= 0 else 0)
        if c_hi > c_lo:
            total += rows * (c_hi - c_lo)

    ii_arr = np.empty(total, dtype=np.int64)
    jj_arr = np.empty(total, dtype=np.int64)
    ww_arr = np.empty(total, dtype=np.float64)
    cdef long[::1] ii = ii_arr
    cdef long[::1] jj = jj_arr
    cdef double[::1] ww = ww_arr

    cdef Py_ssize_t pos = 0
    cdef Py_ssize_t r, c, s
    cdef float m, v
    cdef double t
    with nogil:
        for k2 in range(n_off):
            dy = offs[k2, 0]
            dx = offs[k2, 1]
            if dy >= h or (dx if dx >= 0 else -dx) >= w:
                continue
            rows = h - dy
            c_lo = 0 if dx >= 0 else -dx
            c_hi = w - (dx if dx >= 0 else 0)
            if c_hi <= c_lo:
                continue
            for r in range(rows):
                for c in range(c_lo, c_hi):
                    m = 0.0
                    for s in range(path_starts[k2], path_starts[k2 + 1]):
                        v = vals[r + path_pts[s, 0], c + path_pts[s, 1]]
                        if v > m:
                            m = v
                    t = (<double>m) / sigma
                    ii[pos] = r * w + c
                    jj[pos] = (r + dy) * w + (c + dx)
                    ww[pos] = exp(-t * t)
                    pos += 1
    return ii_arr, jj_arr, ww_arr
