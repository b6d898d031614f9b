#!/usr/bin/env python3
"""Time the compiled kernels against their pure-numpy fallbacks.

Usage:
    python benchmarks/bench_kernels.py [--repeats N]

Each kernel runs on a representative workload; the table reports best-of-N
wall time per call for both flavours and the speedup.  With numba missing
or MODS_NO_NUMBA=1 the "compiled" column is the uncompiled loop code.
"""

import argparse
import time

import numpy as np

import mods._kernels as K
from mods.image import gaussian_kernel


def best_of(fn, args, repeats):
    fn(*args)  # warm-up / compile
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def workloads():
    rng = np.random.default_rng(0)
    img = rng.random((480, 640))
    kern = gaussian_kernel(2.0)
    patch = rng.random((41, 41))
    mag, ang = K.grad_polar_np(patch)
    planes = [rng.normal(size=(480, 640)) * 0.05 for _ in range(3)]
    lv = np.clip(np.round(rng.random((240, 320)) * 255), 0, 255).astype(np.int64)
    descs = rng.normal(size=(5000, 128))
    queries = rng.normal(size=(200, 128))

    yield ("separable conv 480x640", K.conv_h_nb, K.conv_h_np, (img, kern))
    yield ("bilinear warp 480x640", K.warp_bilinear_nb, K.warp_bilinear_np,
           (img, 0.8, 0.1, 3.0, -0.05, 1.1, 2.0, 480, 640))
    yield ("gradient field 480x640", K.grad_polar_nb, K.grad_polar_np, (img,))
    yield ("orientation hist 41x41", K.ori_hist_nb, K.ori_hist_np,
           (mag, ang, 41 / 6.0))
    yield ("sift accumulate 41x41", K.sift_accum_nb, K.sift_accum_np,
           (mag, ang, 0.7))
    yield ("extrema scan 480x640", K.extrema3d_nb, K.extrema3d_np,
           (planes[0], planes[1], planes[2], 0.02))
    yield ("hessian response 480x640", K.hessian_resp_nb, K.hessian_resp_np,
           (img, 6.55))
    yield ("mser tree 240x320", K.mser_tree_nb, K.mser_tree_nb,
           (lv.ravel(), 240, 320))
    yield ("adapt shape (one run)", K.adapt_shape_nb, K.adapt_shape_nb,
           (img, 320.0, 240.0, 4.0, 16, 1.05, 6.0))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    print(f"numba available: {K.HAVE_NUMBA}   active path: "
          f"{'numba' if K.USE_NUMBA else 'numpy'}")
    print(f"{'kernel':28s} {'compiled':>12s} {'numpy':>12s} {'speedup':>9s}")
    for name, fn_nb, fn_np, wargs in workloads():
        t_nb = best_of(fn_nb, wargs, args.repeats)
        if fn_np is fn_nb:
            print(f"{name:28s} {t_nb * 1e3:10.2f}ms {'(loop only)':>12s}")
            continue
        t_np = best_of(fn_np, wargs, args.repeats)
        print(f"{name:28s} {t_nb * 1e3:10.2f}ms {t_np * 1e3:10.2f}ms "
              f"{t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
