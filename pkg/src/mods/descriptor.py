"""Patch normalization, dominant orientation estimation, SIFT and RootSIFT."""

import math
from dataclasses import replace

import numpy as np

from . import _kernels as K

PATCH_SIZE = 41
MAGNIFICATION = 3.0
MAX_ORIENTATIONS = 4
PEAK_RATIO = 0.8
CLAMP = 0.2


def patch_to_image_map(f, patch_size=PATCH_SIZE, magnification=MAGNIFICATION):
    """Affine taking patch coordinates to image coordinates.

    The frame's measurement ellipse (magnification x shape) lands on the
    centered circle of radius patch_size/2.
    """
    half = patch_size / 2.0
    c = (patch_size - 1) / 2.0
    m = f.shape * (magnification / half)
    t = np.array([f.x, f.y]) - m @ np.array([c, c])
    out = np.eye(3)
    out[:2, :2] = m
    out[:2, 2] = t
    return out


def _sampling_corners(f, patch_size, magnification):
    t = patch_to_image_map(f, patch_size, magnification)
    n = patch_size - 1.0
    corners = np.array([[0.0, 0.0, 1.0], [n, 0.0, 1.0],
                        [0.0, n, 1.0], [n, n, 1.0]])
    return (t @ corners.T).T[:, :2]


def frame_in_bounds(f, w, h, patch_size=PATCH_SIZE, magnification=MAGNIFICATION):
    """True when the whole sampling square stays inside the image domain."""
    pts = _sampling_corners(f, patch_size, magnification)
    return bool(np.all((pts[:, 0] >= 0.0) & (pts[:, 0] <= w - 1.0)
                       & (pts[:, 1] >= 0.0) & (pts[:, 1] <= h - 1.0)))


def normalize_patch(img, f, patch_size=PATCH_SIZE, magnification=MAGNIFICATION):
    """Shape-normalized square patch; raises when sampling exits the image."""
    det = f.a11 * f.a22 - f.a12 * f.a21
    if abs(det) < 1e-12:
        raise ValueError("frame shape is singular")
    img = np.ascontiguousarray(img, np.float64)
    h, w = img.shape
    if not frame_in_bounds(f, w, h, patch_size, magnification):
        raise ValueError("frame sampling region exits the image")
    t = patch_to_image_map(f, patch_size, magnification)
    return K.warp_bilinear(img, t[0, 0], t[0, 1], t[0, 2],
                           t[1, 0], t[1, 1], t[1, 2],
                           patch_size, patch_size)


def _hist_peaks(hist):
    """Peak bins >= PEAK_RATIO of max, with parabolic interpolation."""
    n = hist.size
    # two circular [1 2 1]/4 smoothing passes
    for _ in range(2):
        hist = 0.25 * np.roll(hist, 1) + 0.5 * hist + 0.25 * np.roll(hist, -1)
    mx = hist.max()
    if mx <= 0.0:
        return [0.0]
    out = []
    for i in range(n):
        l = hist[(i - 1) % n]
        r = hist[(i + 1) % n]
        v = hist[i]
        if v >= PEAK_RATIO * mx and v > l and v > r:
            den = l - 2.0 * v + r
            off = 0.5 * (l - r) / den if den != 0.0 else 0.0
            ang = (i + off) * (2.0 * math.pi / n)
            out.append((v, ang % (2.0 * math.pi)))
    if not out:
        return [0.0]
    out.sort(key=lambda p: (-p[0], p[1]))
    return [a for _, a in out[:MAX_ORIENTATIONS]]


def dominant_orientations(patch):
    """1..4 dominant gradient directions of a square patch, radians."""
    patch = np.ascontiguousarray(patch, np.float64)
    if patch.shape[0] != patch.shape[1]:
        raise ValueError("patch must be square")
    mag, ang = K.grad_polar(patch)
    if not mag.any():
        return [0.0]
    hist = K.ori_hist(mag, ang, patch.shape[0] / 6.0)
    return _hist_peaks(hist)


def _finalize(raw):
    nrm = np.linalg.norm(raw)
    if nrm < 1e-12:
        return np.zeros(128)
    d = raw / nrm
    np.minimum(d, CLAMP, out=d)
    nrm = np.linalg.norm(d)
    return d / nrm if nrm > 0.0 else d


def sift_describe(patch, orientation):
    """128-d SIFT of a square patch, gradients rotated by ``orientation``."""
    patch = np.ascontiguousarray(patch, np.float64)
    if min(patch.shape) < 16 or patch.shape[0] != patch.shape[1]:
        raise ValueError("patch must be square, at least 16x16")
    mag, ang = K.grad_polar(patch)
    return _finalize(K.sift_accum(mag, ang, float(orientation)))


def root_sift(d):
    """Square-root of the L1-normalized vector; unit L2 norm (or all-zero)."""
    d = np.asarray(d, np.float64)
    if (d < 0.0).any():
        raise ValueError("descriptor values must be non-negative")
    s = d.sum()
    if s <= 0.0:
        return np.zeros_like(d)
    return np.sqrt(d / s)


def describe_frames(img, fs, patch_size=PATCH_SIZE, magnification=MAGNIFICATION,
                    root=True):
    """Orient and describe frames; skips frames whose patch exits the image.

    Frames with k dominant orientations yield k (frame, descriptor) pairs.
    Returns (frames, (n, 128) float64 array).
    """
    img = np.ascontiguousarray(img, np.float64)
    h, w = img.shape
    out_frames = []
    out_descs = []
    for f in fs:
        det = f.a11 * f.a22 - f.a12 * f.a21
        if abs(det) < 1e-12 or not frame_in_bounds(f, w, h, patch_size, magnification):
            continue
        t = patch_to_image_map(f, patch_size, magnification)
        patch = K.warp_bilinear(img, t[0, 0], t[0, 1], t[0, 2],
                                t[1, 0], t[1, 1], t[1, 2],
                                patch_size, patch_size)
        mag, ang = K.grad_polar(patch)
        if mag.any():
            hist = K.ori_hist(mag, ang, patch_size / 6.0)
            thetas = _hist_peaks(hist)
        else:
            thetas = [0.0]
        for theta in thetas:
            d = _finalize(K.sift_accum(mag, ang, float(theta)))
            if root:
                d = root_sift(d)
            out_frames.append(replace(f, orientation=float(theta)))
            out_descs.append(d)
    if out_descs:
        descs = np.vstack(out_descs)
    else:
        descs = np.zeros((0, 128))
    return out_frames, descs
