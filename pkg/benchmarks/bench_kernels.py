"""Benchmark the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Times conv2d forward/backward and bilinear warp forward/backward on a few
representative shapes and prints a speedup table. Also cross-checks that
both backends agree to float32 tolerance on every benchmarked case.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from ffnerv.kernels import numpy_backend

try:
    from ffnerv.kernels import _ckernels
except ImportError:
    _ckernels = None

CONV_CASES = [
    # (label, C, H, W, O, k, groups)
    ("conv 32x8x8 -> 96", 32, 8, 8, 96, 3, 1),
    ("conv 24x16x16 -> 64 g4", 24, 16, 16, 64, 3, 4),
    ("conv 16x32x32 -> 48", 16, 32, 32, 48, 3, 1),
]
WARP_CASES = [
    ("warp 3x32x32", 3, 32, 32),
    ("warp 3x128x128", 3, 128, 128),
]


def timeit(fn, repeats: int) -> float:
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_conv(case, repeats):
    label, C, H, W, O, k, groups = case
    rng = np.random.default_rng(0)
    x = rng.standard_normal((C, H, W), dtype=np.float32)
    w = rng.standard_normal((O, C // groups, k, k), dtype=np.float32)
    b = rng.standard_normal(O, dtype=np.float32)
    pad = k // 2
    ref = numpy_backend.conv2d_forward(x, w, b, groups, pad)
    gout = rng.standard_normal(ref.shape, dtype=np.float32)
    rows = []
    t_np = timeit(lambda: numpy_backend.conv2d_forward(x, w, b, groups, pad),
                  repeats)
    tb_np = timeit(lambda: numpy_backend.conv2d_backward(
        x, w, groups, pad, gout, True, True), repeats)
    if _ckernels is not None:
        out_c = _ckernels.conv2d_forward(x, w, b, groups, pad)
        assert np.allclose(out_c, ref, atol=1e-4), label
        t_c = timeit(lambda: _ckernels.conv2d_forward(x, w, b, groups, pad),
                     repeats)
        tb_c = timeit(lambda: _ckernels.conv2d_backward(
            x, w, groups, pad, gout, True, True), repeats)
    else:
        t_c = tb_c = None
    rows.append((label + " fwd", t_np, t_c))
    rows.append((label + " bwd", tb_np, tb_c))
    return rows


def bench_warp(case, repeats):
    label, C, H, W = case
    rng = np.random.default_rng(0)
    frame = rng.uniform(0, 1, (C, H, W)).astype(np.float32)
    flow = rng.standard_normal((2, H, W)).astype(np.float32) * 2
    gout = rng.standard_normal((C, H, W)).astype(np.float32)
    ref = numpy_backend.warp_forward(frame, flow)
    rows = []
    t_np = timeit(lambda: numpy_backend.warp_forward(frame, flow), repeats)
    tb_np = timeit(lambda: numpy_backend.warp_backward(
        frame, flow, gout, True, True), repeats)
    if _ckernels is not None:
        out_c = _ckernels.warp_forward(frame, flow)
        assert np.allclose(out_c, ref, atol=1e-5), label
        t_c = timeit(lambda: _ckernels.warp_forward(frame, flow), repeats)
        tb_c = timeit(lambda: _ckernels.warp_backward(
            frame, flow, gout, True, True), repeats)
    else:
        t_c = tb_c = None
    rows.append((label + " fwd", t_np, t_c))
    rows.append((label + " bwd", tb_np, tb_c))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    if _ckernels is None:
        print("compiled backend unavailable; timing numpy fallback only\n")

    rows = []
    for case in CONV_CASES:
        rows += bench_conv(case, args.repeats)
    for case in WARP_CASES:
        rows += bench_warp(case, args.repeats)

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'compiled':>10}  {'speedup':>8}")
    for label, t_np, t_c in rows:
        if t_c is None:
            print(f"{label:<{width}}  {t_np * 1e6:>8.1f}us  {'-':>10}  {'-':>8}")
        else:
            print(f"{label:<{width}}  {t_np * 1e6:>8.1f}us  {t_c * 1e6:>8.1f}us"
                  f"  {t_np / t_c:>7.2f}x")


if __name__ == "__main__":
    main()
