"""Difference-of-Gaussians keypoints with sub-pixel/sub-scale refinement."""

import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels as K
from ..frames import DOG, circular_frame, sort_frames
from .pyramid import build_pyramid

# frame radius as a multiple of the detected blur level
SCALE_FACTOR = math.sqrt(2.0)


@dataclass(frozen=True)
class DogParams:
    n_scales: int = 3
    sigma0: float = 1.6
    contrast_thr: float = 0.03
    edge_ratio: float = 10.0
    border: int = 4
    max_interp_steps: int = 3


def _refine(dogs, si, ys, xs, params, k_step):
    """Iterative quadratic refinement; returns arrays of survivors."""
    n_lvl = len(dogs)
    h, w = dogs[0].shape
    stack = np.stack(dogs)
    s = np.full(ys.shape, si, np.int64)
    y = ys.copy()
    x = xs.copy()
    alive = np.ones(ys.shape, bool)
    off = np.zeros((ys.size, 3))
    for _ in range(params.max_interp_steps):
        d = stack
        g0 = 0.5 * (d[s + 1, y, x] - d[s - 1, y, x])
        g1 = 0.5 * (d[s, y + 1, x] - d[s, y - 1, x])
        g2 = 0.5 * (d[s, y, x + 1] - d[s, y, x - 1])
        v2 = 2.0 * d[s, y, x]
        h00 = d[s + 1, y, x] + d[s - 1, y, x] - v2
        h11 = d[s, y + 1, x] + d[s, y - 1, x] - v2
        h22 = d[s, y, x + 1] + d[s, y, x - 1] - v2
        h01 = 0.25 * (d[s + 1, y + 1, x] - d[s + 1, y - 1, x]
                      - d[s - 1, y + 1, x] + d[s - 1, y - 1, x])
        h02 = 0.25 * (d[s + 1, y, x + 1] - d[s + 1, y, x - 1]
                      - d[s - 1, y, x + 1] + d[s - 1, y, x - 1])
        h12 = 0.25 * (d[s, y + 1, x + 1] - d[s, y + 1, x - 1]
                      - d[s, y - 1, x + 1] + d[s, y - 1, x - 1])
        hess = np.stack([np.stack([h00, h01, h02], -1),
                         np.stack([h01, h11, h12], -1),
                         np.stack([h02, h12, h22], -1)], -2)
        grad = np.stack([g0, g1, g2], -1)
        det = np.linalg.det(hess)
        ok = np.abs(det) > 1e-30
        off = np.zeros_like(grad)
        if ok.any():
            off[ok] = -np.linalg.solve(hess[ok], grad[ok][..., None])[..., 0]
        alive &= ok & (np.abs(off) < 1.5).all(axis=1)
        move = (np.abs(off) > 0.6).any(axis=1) & alive
        if not move.any():
            break
        s = np.where(move, np.clip(s + np.rint(off[:, 0]).astype(np.int64), 1, n_lvl - 2), s)
        y = np.where(move, np.clip(y + np.rint(off[:, 1]).astype(np.int64),
                                   params.border, h - 1 - params.border), y)
        x = np.where(move, np.clip(x + np.rint(off[:, 2]).astype(np.int64),
                                   params.border, w - 1 - params.border), x)

    d = stack
    val = d[s, y, x] + 0.5 * (off * np.stack([
        0.5 * (d[s + 1, y, x] - d[s - 1, y, x]),
        0.5 * (d[s, y + 1, x] - d[s, y - 1, x]),
        0.5 * (d[s, y, x + 1] - d[s, y, x - 1])], -1)).sum(axis=1)
    alive &= np.abs(val) >= params.contrast_thr
    # edge response from the spatial 2x2 Hessian
    v2 = 2.0 * d[s, y, x]
    hyy = d[s, y + 1, x] + d[s, y - 1, x] - v2
    hxx = d[s, y, x + 1] + d[s, y, x - 1] - v2
    hxy = 0.25 * (d[s, y + 1, x + 1] - d[s, y + 1, x - 1]
                  - d[s, y - 1, x + 1] + d[s, y - 1, x - 1])
    tr = hxx + hyy
    det2 = hxx * hyy - hxy * hxy
    r = params.edge_ratio
    alive &= (det2 > 0) & (tr * tr * r < (r + 1.0) ** 2 * det2)
    return s[alive], y[alive], x[alive], off[alive], val[alive]


def detect_dog(img, params=None):
    """Scale-space DoG extrema as circular frames (view coordinates)."""
    params = params or DogParams()
    img = np.asarray(img, np.float64)
    if min(img.shape) < 32:
        raise ValueError("image too small for one octave (min side 32)")
    octaves = build_pyramid(img, params.n_scales, params.sigma0)
    k_step = 2.0 ** (1.0 / params.n_scales)
    frames = []
    for octv in octaves:
        dogs = [octv.levels[i + 1] - octv.levels[i]
                for i in range(len(octv.levels) - 1)]
        h, w = dogs[0].shape
        if min(h, w) < 2 * params.border + 3:
            continue
        for si in range(1, params.n_scales + 1):
            mask = K.extrema3d(dogs[si - 1], dogs[si], dogs[si + 1],
                               0.5 * params.contrast_thr)
            ys, xs = np.nonzero(mask)
            keep = ((ys >= params.border) & (ys < h - params.border)
                    & (xs >= params.border) & (xs < w - params.border))
            ys, xs = ys[keep], xs[keep]
            if ys.size == 0:
                continue
            s, y, x, off, val = _refine(dogs, si, ys, xs, params, k_step)
            for j in range(s.size):
                sigma = params.sigma0 * k_step ** (s[j] + off[j, 0])
                fx = (x[j] + off[j, 2]) * octv.stride
                fy = (y[j] + off[j, 1]) * octv.stride
                scale = SCALE_FACTOR * sigma * octv.stride
                frames.append(circular_frame(float(fx), float(fy), float(scale),
                                             detector=DOG,
                                             response=float(abs(val[j]))))
    return sort_frames(frames)
