#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-python fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Covers the three hot paths: descriptor interpolation, ordered thinning,
and intervening-contour affinity construction.
"""

import argparse
import time

import numpy as np

from deepboundary import kernels, stencils


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_interp(mod, rng):
    data = rng.standard_normal((256, 56, 56)).astype(np.float32)
    n = 15000
    rows = rng.random(n) * 55
    cols = rng.random(n) * 55
    out = np.empty((n, 256), dtype=np.float32)
    return lambda: mod.interp_block(data, rows, cols, True, out)


def bench_thin(mod, rng):
    vals = (rng.random((160, 160)) * (rng.random((160, 160)) < 0.4)).astype(
        np.float32)
    return lambda: mod.thin(vals)


def bench_affinity(mod, rng):
    vals = rng.random((96, 96)).astype(np.float32)
    offsets = stencils.half_disk_offsets(5.0)
    paths = [stencils.bresenham_path(dy, dx) for dy, dx in offsets]
    return lambda: mod.affinity_lines(vals, offsets, paths, 0.14)


def run(repeats):
    backends = kernels.available_backends()
    cases = {
        "interp 15000x256 @56x56": bench_interp,
        "thin 160x160": bench_thin,
        "affinity 96x96 r5": bench_affinity,
    }
    print(f"{'kernel':<28}" + "".join(f"{name:>12}" for name in backends)
          + f"{'speedup':>10}")
    for label, make in cases.items():
        times = {}
        for name, mod in backends.items():
            times[name] = timeit(make(mod, np.random.default_rng(0)), repeats)
        row = f"{label:<28}" + "".join(f"{times[n] * 1e3:>10.1f}ms"
                                       for n in backends)
        if "compiled" in times and "python" in times:
            row += f"{times['python'] / times['compiled']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    run(args.repeats)
