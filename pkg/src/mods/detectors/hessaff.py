"""Hessian-determinant keypoints with iterative affine shape adaptation."""

import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels as K
from ..frames import HESSAFF, AffineFrame, sort_frames
from .pyramid import build_pyramid

SCALE_FACTOR = math.sqrt(2.0)


@dataclass(frozen=True)
class HessAffParams:
    n_scales: int = 3
    sigma0: float = 1.6
    response_thr: float = 1e-8
    per_megapixel: int = 3000
    border: int = 4
    max_iter: int = 16
    conv_ratio: float = 1.05   # stop once the axis update is below 5%
    max_aniso: float = 6.0


def detect_hessian_affine(img, params=None):
    """Scale-space det-of-Hessian maxima, shape-adapted to ellipses."""
    params = params or HessAffParams()
    img = np.asarray(img, np.float64)
    if min(img.shape) < 32:
        raise ValueError("image too small for one octave (min side 32)")
    octaves = build_pyramid(img, params.n_scales, params.sigma0)
    k_step = 2.0 ** (1.0 / params.n_scales)

    cands = []  # (response, octave index, level index, y, x)
    for oi, octv in enumerate(octaves):
        resp = [K.hessian_resp(octv.levels[i], octv.sigmas[i] ** 4)
                for i in range(len(octv.levels))]
        h, w = resp[0].shape
        if min(h, w) < 2 * params.border + 3:
            continue
        for si in range(1, params.n_scales + 1):
            mask = K.extrema3d(resp[si - 1], resp[si], resp[si + 1],
                               params.response_thr)
            ys, xs = np.nonzero(mask)
            for y, x in zip(ys, xs):
                if not (params.border <= y < h - params.border
                        and params.border <= x < w - params.border):
                    continue
                v = resp[si][y, x]
                if v > params.response_thr:  # maxima only; saddles are negative
                    cands.append((float(v), oi, si, int(y), int(x)))

    cap = max(1, int(params.per_megapixel * img.size / 1e6))
    cands.sort(key=lambda c: (-c[0], c[1], c[2], c[3], c[4]))
    cands = cands[:cap]

    frames = []
    for v, oi, si, y, x in cands:
        octv = octaves[oi]
        sigma_img = octv.sigmas[si] * octv.stride
        # adapt on the full-resolution image: the pyramid level's own
        # smoothing would wash out the anisotropy being measured
        a, b, c, d, ok = K.adapt_shape(img, float(x * octv.stride),
                                       float(y * octv.stride), sigma_img,
                                       params.max_iter, params.conv_ratio,
                                       params.max_aniso)
        if not ok:
            continue
        r = SCALE_FACTOR * sigma_img
        frames.append(AffineFrame(
            x=float(x * octv.stride), y=float(y * octv.stride),
            a11=a * r, a12=b * r, a21=c * r, a22=d * r,
            scale=r, detector=HESSAFF, response=v))
    return sort_frames(frames)
