#!/usr/bin/env python3
"""Benchmark the hot kernels: numba JIT path vs pure-numpy fallback.

Run: python benchmarks/bench_kernels.py [--repeats N]

Both flavors are imported directly (no env flag needed here) so one
process can time them side by side; FLAGLINE_NUMBA=0 is how deployments
pick the fallback globally.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from flagline.kernels import (
    _bilinear_njit,
    _bilinear_numpy,
    _blur_axis0_njit,
    _blur_axis0_numpy,
    _dark_fraction_njit,
    _dark_fraction_numpy,
    _mean_abs_luma_diff_njit,
    _mean_abs_luma_diff_numpy,
    _mosaic_njit,
    _mosaic_numpy,
    _sosfilt_njit,
    _sosfilt_python,
)
from flagline.accel import NUMBA_ENABLED


def timeit(fn, *args, repeats=5):
    fn(*args)  # warmup (JIT compile on first call)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows = []

    img = rng.integers(0, 256, size=(512, 1024, 3)).astype(np.float64)
    xs = rng.uniform(0, 1023, size=512 * 1024)
    ys = rng.uniform(0, 511, size=512 * 1024)
    rows.append(
        (
            "bilinear warp 1024x512",
            timeit(_bilinear_njit, img, xs, ys, True, repeats=args.repeats),
            timeit(_bilinear_numpy, img, xs, ys, True, repeats=args.repeats),
        )
    )

    frame = rng.integers(0, 256, size=(512, 1024, 3)).astype(np.float64)
    rows.append(
        (
            "dark fraction 1024x512",
            timeit(_dark_fraction_njit, frame, 16.0, repeats=args.repeats),
            timeit(_dark_fraction_numpy, frame, 16.0, repeats=args.repeats),
        )
    )

    fb = rng.integers(0, 256, size=(512, 1024, 3)).astype(np.float64)
    rows.append(
        (
            "luma diff 1024x512",
            timeit(_mean_abs_luma_diff_njit, frame, fb, repeats=args.repeats),
            timeit(_mean_abs_luma_diff_numpy, frame, fb, repeats=args.repeats),
        )
    )

    region = rng.integers(0, 256, size=(256, 256, 3)).astype(np.float64)
    rows.append(
        (
            "box blur pass 256x256 r=9",
            timeit(_blur_axis0_njit, region, 9, repeats=args.repeats),
            timeit(_blur_axis0_numpy, region, 9, repeats=args.repeats),
        )
    )
    rows.append(
        (
            "mosaic 256x256 cell=16",
            timeit(_mosaic_njit, region, 16, repeats=args.repeats),
            timeit(_mosaic_numpy, region, 16, repeats=args.repeats),
        )
    )

    sos = np.array(
        [
            [0.2, 0.1, -0.05, 1.0, -0.3, 0.12],
            [0.5, -0.2, 0.1, 1.0, 0.15, -0.4],
        ]
    )
    audio = rng.standard_normal(16000 * 30)
    rows.append(
        (
            "biquad cascade 30s@16kHz",
            timeit(_sosfilt_njit, sos, audio, repeats=args.repeats),
            timeit(_sosfilt_python, sos, audio, repeats=args.repeats),
        )
    )

    print(f"numba available: {NUMBA_ENABLED}")
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel'.ljust(width)}  {'njit':>10}  {'numpy':>10}  {'speedup':>8}")
    print("-" * (width + 34))
    for name, t_jit, t_np in rows:
        print(f"{name.ljust(width)}  {t_jit * 1e3:>8.2f}ms  {t_np * 1e3:>8.2f}ms  {t_np / t_jit:>7.1f}x")


if __name__ == "__main__":
    main()
