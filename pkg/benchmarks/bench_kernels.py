#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-NumPy fallbacks.

Run after an editable install:

    python3 benchmarks/bench_kernels.py [--repeats 5]

Each hot kernel is timed on a realistic workload with both implementations;
results should agree to float tolerance (the test suite asserts equality,
this script reports the speed ratio). With MICROFUSE_NO_NUMBA=1 only the
NumPy path is available and the script reports that.
"""

import argparse
import time

import numpy as np

import microfuse.kernels as K
from microfuse.accel import USE_NUMBA


def timeit(fn, args, repeats):
    fn(*args)  # warm up (JIT compile / cache touch)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def workloads(rng):
    frames = rng.random((240, 120, 180)).astype(np.float32)
    angles = np.linspace(-90, 90, 240)
    vol = rng.random((200, 100, 50)).astype(np.float32)
    img = rng.random((500, 700))
    rows = rng.uniform(0, 499, 200_000)
    cols = rng.uniform(0, 699, 200_000)
    n = 100_000
    fixed_bin = rng.integers(0, 32, n)
    tm = rng.uniform(1.0, 29.0, n)
    table = rng.normal(size=(32, 32))
    coef = rng.normal(size=(20, 24))
    tx = rng.uniform(0, 23, n)
    ty = rng.uniform(0, 19, n)
    beta = rng.normal(size=n)
    return [
        ("fill_volume", (frames, angles, 10.0, 0.25, 0.4, 1.0, 200, 100, 50,
                         1.2, True, False)),
        ("sample_fan", (vol, 0.4, 0.4, 1.0, -40.0, 0.0, 0.0, angles, 10.0,
                        120, 180, 0.25, True)),
        ("bilinear", (img, rows, cols, 0.0, 0.0)),
        ("bilinear_grad", (img, rows, cols, 0.0)),
        ("parzen_hist", (fixed_bin, tm, 32)),
        ("parzen_terms", (fixed_bin, tm, table)),
        ("ffd_disp", (tx, ty, coef, coef)),
        ("ffd_scatter", (tx, ty, beta, beta, 24, 20)),
    ]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"numba active: {USE_NUMBA}")
    print(f"{'kernel':<14} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    for name, wargs in workloads(rng):
        t_np = timeit(getattr(K, f"_{name}_numpy"), wargs, args.repeats)
        if USE_NUMBA:
            t_nb = timeit(getattr(K, f"_{name}_numba"), wargs, args.repeats)
            print(f"{name:<14} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms {t_np / t_nb:>8.1f}x")
        else:
            print(f"{name:<14} {t_np * 1e3:>8.2f}ms {'-':>10} {'-':>9}")


if __name__ == "__main__":
    main()
