"""Maximally stable extremal regions over a 256-level component tree.

Both intensity polarities are processed (dark regions on the image, bright
regions on its inversion).  Stability of a region alive at level l is

    q(l) = (area(l + delta) - area(max(l - delta, birth))) / area(l)

evaluated on the canonical component history produced by the union-find
pass; selected levels are local minima of q below the variation cap.
"""

from dataclasses import dataclass

import numpy as np

from .. import _kernels as K
from ..frames import MSER, frame_from_moments, sort_frames


@dataclass(frozen=True)
class MserParams:
    delta: int = 5
    min_area: int = 30
    max_area_frac: float = 0.01
    max_variation: float = 0.25
    min_diversity: float = 0.2


def _chain_records(recs, tail):
    """Walk a component chain tail -> birth; returns records oldest first."""
    (rec_prev, rec_level, rec_area, rec_mx, rec_my,
     rec_mxx, rec_myy, rec_mxy) = recs
    idxs = []
    i = tail
    while i >= 0:
        idxs.append(i)
        i = rec_prev[i]
    idxs.reverse()
    return np.asarray(idxs, np.int64)


def _select_chain(recs, tail, death, params, max_area):
    (rec_prev, rec_level, rec_area, rec_mx, rec_my,
     rec_mxx, rec_myy, rec_mxy) = recs
    idxs = _chain_records(recs, tail)
    levels = rec_level[idxs]
    areas = rec_area[idxs]
    if areas[-1] < params.min_area:
        return []
    birth = int(levels[0])
    hi = int(death) - params.delta
    if hi <= birth:
        return []

    ls = np.arange(birth, hi)
    # step-function lookup of area at a query level
    pos = np.searchsorted(levels, ls, side="right") - 1
    a_now = areas[pos]
    pos_p = np.searchsorted(levels, ls + params.delta, side="right") - 1
    a_plus = areas[pos_p]
    lm = np.maximum(ls - params.delta, birth)
    pos_m = np.searchsorted(levels, lm, side="right") - 1
    a_minus = areas[pos_m]
    q = (a_plus - a_minus) / a_now

    # local minima with plateau handling: midpoint of each flat valley
    n = q.size
    picks = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and q[j + 1] == q[i]:
            j += 1
        left_ok = i == 0 or q[i - 1] > q[i]
        right_ok = j == n - 1 or q[j + 1] > q[i]
        if left_ok and right_ok:
            picks.append((i + j) // 2)
        i = j + 1

    out = []
    prev_area = None
    prev_q = None
    for p in picks:
        if q[p] > params.max_variation:
            continue
        area = a_now[p]
        if not params.min_area <= area <= max_area:
            continue
        # diversity: merge nested picks with nearly identical extent
        if prev_area is not None and (area - prev_area) < params.min_diversity * area:
            if q[p] >= prev_q:
                continue
            out.pop()
        k = idxs[pos[p]]
        a = float(rec_area[k])
        cx = rec_mx[k] / a
        cy = rec_my[k] / a
        cov = np.array([[rec_mxx[k] / a - cx * cx, rec_mxy[k] / a - cx * cy],
                        [rec_mxy[k] / a - cx * cy, rec_myy[k] / a - cy * cy]])
        f = frame_from_moments(cx, cy, cov, detector=MSER,
                               response=float(1.0 - q[p]))
        if f is not None:
            out.append(f)
            prev_area = area
            prev_q = q[p]
    return out


def detect_mser(img, params=None):
    """MSER frames (centroid + second-moment ellipse), both polarities."""
    params = params or MserParams()
    img = np.asarray(img, np.float64)
    h, w = img.shape
    if min(h, w) < 16:
        raise ValueError("image too small (min side 16)")
    u8 = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    max_area = params.max_area_frac * img.size

    frames = []
    for inverted in (False, True):
        lv = (255 - u8 if inverted else u8).astype(np.int64).ravel()
        res = K.mser_tree(lv, h, w)
        recs = res[:8]
        chain_tail, chain_death = res[8], res[9]
        for t, d in zip(chain_tail, chain_death):
            frames.extend(_select_chain(recs, int(t), int(d), params, max_area))
    return sort_frames(frames)
