#!/usr/bin/env python3
"""Benchmark the compiled grid-prediction kernel against the pure-Python
fallback on identical inputs, and verify they agree bit for bit.

Usage: python benchmarks/bench_backends.py [--points 200000] [--repeats 3]
"""

import argparse
import time

import numpy as np

from pm2lat import backend, oracle
from pm2lat.compute import WaveModel
from pm2lat.core import DType, TransposeMode
from pm2lat.nascache import GridSpec, PreparedGrid


def build_grid(points: int) -> GridSpec:
    # factor the target count into a plausible 4-axis NAS grid
    n_batch, n_n = 4, 10
    n_m = max(2, int(round((points / (n_batch * n_n)) ** 0.5)))
    n_k = max(2, points // (n_batch * n_m * n_n))
    return GridSpec(
        family="matmul", dtype=DType.FP32, transpose_mode=TransposeMode.NN,
        axes={
            "batch": tuple(range(1, n_batch + 1)),
            "m": tuple(range(64, 64 + 61 * n_m, 61)),
            "n": tuple(range(96, 96 + 53 * n_n, 53)),
            "k": tuple(range(32, 32 + 163 * n_k, 163)),
        })


def bench(fn, repeats):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=200_000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    dataset = oracle.emit_fixture(oracle.fp32_device())
    grid = build_grid(args.points)
    wm = WaveModel(sm_count=dataset.device.sm_count)
    prep = PreparedGrid(dataset, grid, wm)
    total = grid.cardinality
    print(f"grid: {total} points "
          f"({'x'.join(str(len(grid.axes[a])) for a in ('batch', 'm', 'n', 'k'))})")

    py_time, py_out = bench(lambda: backend.predict_grid(prep, force_python=True),
                            args.repeats)
    print(f"python backend : {py_time:8.3f}s  "
          f"{py_time / total * 1e6:8.3f} us/point")

    if backend.compiled_available():
        cy_time, cy_out = bench(lambda: backend.predict_grid(prep, jobs=1),
                                args.repeats)
        print(f"cython backend : {cy_time:8.3f}s  "
              f"{cy_time / total * 1e6:8.3f} us/point  "
              f"({py_time / cy_time:6.1f}x)")
        identical = np.array_equal(py_out.view(np.uint64), cy_out.view(np.uint64))
        print(f"bit-identical  : {identical}")
        if not identical:
            raise SystemExit("backend outputs diverged")
    else:
        print("cython backend : not built (pip install -e . builds it)")


if __name__ == "__main__":
    main()
