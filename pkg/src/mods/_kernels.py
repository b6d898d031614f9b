"""Hot inner loops, compiled with numba when available.

Every kernel exists in two flavours: a ``*_nb`` loop version compiled with
``@njit`` and a ``*_np`` vectorized/plain-python version.  The public name
dispatches on ``USE_NUMBA``.  Set ``MODS_NO_NUMBA=1`` to force the numpy
path (useful when numba is broken or for cross-checking results);
``benchmarks/bench_kernels.py`` times both flavours side by side.

All image buffers are 2-D float64 arrays, row-major, pixel centers at
integer coordinates.
"""

import math
import os

import numpy as np


def _numba_disabled() -> bool:
    return os.environ.get("MODS_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")


HAVE_NUMBA = False
if not _numba_disabled():
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass

USE_NUMBA = HAVE_NUMBA

if HAVE_NUMBA:
    _jit = njit(cache=True, nogil=True)
else:
    def _jit(fn):
        return fn


# ---------------------------------------------------------------------------
# separable convolution, edge replication
# ---------------------------------------------------------------------------

def _conv_h_loop(img, k):
    h, w = img.shape
    n = k.size
    r = (n - 1) // 2
    out = np.empty_like(img)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for i in range(n):
                xx = x + i - r
                if xx < 0:
                    xx = 0
                elif xx >= w:
                    xx = w - 1
                acc += img[y, xx] * k[i]
            out[y, x] = acc
    return out


def _conv_v_loop(img, k):
    h, w = img.shape
    n = k.size
    r = (n - 1) // 2
    out = np.empty_like(img)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for i in range(n):
                yy = y + i - r
                if yy < 0:
                    yy = 0
                elif yy >= h:
                    yy = h - 1
                acc += img[yy, x] * k[i]
            out[y, x] = acc
    return out


def conv_h_np(img, k):
    r = (k.size - 1) // 2
    p = np.pad(img, ((0, 0), (r, r)), mode="edge")
    out = np.zeros_like(img)
    for i in range(k.size):
        out += k[i] * p[:, i:i + img.shape[1]]
    return out


def conv_v_np(img, k):
    r = (k.size - 1) // 2
    p = np.pad(img, ((r, r), (0, 0)), mode="edge")
    out = np.zeros_like(img)
    for i in range(k.size):
        out += k[i] * p[i:i + img.shape[0], :]
    return out


conv_h_nb = _jit(_conv_h_loop)
conv_v_nb = _jit(_conv_v_loop)
conv_h = conv_h_nb if USE_NUMBA else conv_h_np
conv_v = conv_v_nb if USE_NUMBA else conv_v_np


# ---------------------------------------------------------------------------
# bilinear affine warp (inverse mapping, zero outside the source domain)
# ---------------------------------------------------------------------------

def _warp_bilinear_loop(img, ia, ib, ic, id_, ie, if_, out_h, out_w):
    h, w = img.shape
    out = np.zeros((out_h, out_w), np.float64)
    for yd in range(out_h):
        for xd in range(out_w):
            sx = ia * xd + ib * yd + ic
            sy = id_ * xd + ie * yd + if_
            if sx < 0.0 or sx > w - 1.0 or sy < 0.0 or sy > h - 1.0:
                continue
            x0 = int(sx)
            y0 = int(sy)
            x1 = x0 + 1
            y1 = y0 + 1
            if x1 > w - 1:
                x1 = w - 1
            if y1 > h - 1:
                y1 = h - 1
            fx = sx - x0
            fy = sy - y0
            v0 = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
            v1 = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
            out[yd, xd] = v0 * (1.0 - fy) + v1 * fy
    return out


def warp_bilinear_np(img, ia, ib, ic, id_, ie, if_, out_h, out_w):
    h, w = img.shape
    xs = np.arange(out_w, dtype=np.float64)
    ys = np.arange(out_h, dtype=np.float64)[:, None]
    sx = ia * xs + ib * ys + ic
    sy = id_ * xs + ie * ys + if_
    valid = (sx >= 0.0) & (sx <= w - 1.0) & (sy >= 0.0) & (sy <= h - 1.0)
    sxc = np.clip(sx, 0.0, w - 1.0)
    syc = np.clip(sy, 0.0, h - 1.0)
    x0 = sxc.astype(np.int64)
    y0 = syc.astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sxc - x0
    fy = syc - y0
    v0 = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    v1 = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    out = v0 * (1.0 - fy) + v1 * fy
    out[~valid] = 0.0
    return out


warp_bilinear_nb = _jit(_warp_bilinear_loop)
warp_bilinear = warp_bilinear_nb if USE_NUMBA else warp_bilinear_np


# ---------------------------------------------------------------------------
# gradient magnitude / orientation (central differences, zero at borders)
# ---------------------------------------------------------------------------

def _grad_polar_loop(img):
    h, w = img.shape
    mag = np.zeros((h, w), np.float64)
    ang = np.zeros((h, w), np.float64)
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            gx = 0.5 * (img[y, x + 1] - img[y, x - 1])
            gy = 0.5 * (img[y + 1, x] - img[y - 1, x])
            mag[y, x] = math.sqrt(gx * gx + gy * gy)
            ang[y, x] = math.atan2(gy, gx)
    return mag, ang


def grad_polar_np(img):
    h, w = img.shape
    gx = np.zeros((h, w), np.float64)
    gy = np.zeros((h, w), np.float64)
    gx[1:-1, 1:-1] = 0.5 * (img[1:-1, 2:] - img[1:-1, :-2])
    gy[1:-1, 1:-1] = 0.5 * (img[2:, 1:-1] - img[:-2, 1:-1])
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx)
    ang[mag == 0.0] = 0.0
    mag[0, :] = mag[-1, :] = mag[:, 0] = mag[:, -1] = 0.0
    return mag, ang


grad_polar_nb = _jit(_grad_polar_loop)
grad_polar = grad_polar_nb if USE_NUMBA else grad_polar_np


# ---------------------------------------------------------------------------
# 36-bin gradient orientation histogram, Gaussian-weighted around the center
# ---------------------------------------------------------------------------

TWO_PI = 2.0 * math.pi


def _ori_hist_loop(mag, ang, sigma):
    n = mag.shape[0]
    c = (n - 1) * 0.5
    inv2s2 = 1.0 / (2.0 * sigma * sigma)
    hist = np.zeros(36, np.float64)
    for y in range(n):
        for x in range(n):
            m = mag[y, x]
            if m <= 0.0:
                continue
            dx = x - c
            dy = y - c
            wgt = m * math.exp(-(dx * dx + dy * dy) * inv2s2)
            a = ang[y, x]
            if a < 0.0:
                a += TWO_PI
            b = a / TWO_PI * 36.0
            b0 = int(b)
            fb = b - b0
            if b0 >= 36:
                b0 -= 36
            b1 = b0 + 1
            if b1 >= 36:
                b1 -= 36
            hist[b0] += wgt * (1.0 - fb)
            hist[b1] += wgt * fb
    return hist


def ori_hist_np(mag, ang, sigma):
    n = mag.shape[0]
    c = (n - 1) * 0.5
    ys, xs = np.mgrid[0:n, 0:n]
    wgt = mag * np.exp(-((xs - c) ** 2 + (ys - c) ** 2) / (2.0 * sigma * sigma))
    a = np.where(ang < 0.0, ang + TWO_PI, ang)
    b = a / TWO_PI * 36.0
    b0 = b.astype(np.int64)
    fb = b - b0
    b0 = b0 % 36
    b1 = (b0 + 1) % 36
    hist = np.zeros(36, np.float64)
    sel = mag > 0.0
    np.add.at(hist, b0[sel], (wgt * (1.0 - fb))[sel])
    np.add.at(hist, b1[sel], (wgt * fb)[sel])
    return hist


ori_hist_nb = _jit(_ori_hist_loop)
ori_hist = ori_hist_nb if USE_NUMBA else ori_hist_np


# ---------------------------------------------------------------------------
# SIFT-style 4x4x8 descriptor accumulation over a square patch
# ---------------------------------------------------------------------------

def _sift_accum_loop(mag, ang, theta):
    n = mag.shape[0]
    c = (n - 1) * 0.5
    bin_size = n / 4.0
    sigma = 0.5 * n
    inv2s2 = 1.0 / (2.0 * sigma * sigma)
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    desc = np.zeros(128, np.float64)
    for y in range(n):
        for x in range(n):
            m = mag[y, x]
            if m <= 0.0:
                continue
            dx = x - c
            dy = y - c
            u = (cos_t * dx + sin_t * dy) / bin_size
            v = (-sin_t * dx + cos_t * dy) / bin_size
            ub = u + 1.5
            vb = v + 1.5
            if ub <= -1.0 or ub >= 4.0 or vb <= -1.0 or vb >= 4.0:
                continue
            wgt = m * math.exp(-(dx * dx + dy * dy) * inv2s2)
            a = ang[y, x] - theta
            while a < 0.0:
                a += TWO_PI
            while a >= TWO_PI:
                a -= TWO_PI
            ob = a / TWO_PI * 8.0
            o0 = int(ob)
            fo = ob - o0
            if o0 >= 8:
                o0 -= 8
            u0 = int(math.floor(ub))
            v0 = int(math.floor(vb))
            fu = ub - u0
            fv = vb - v0
            for dv in range(2):
                vv = v0 + dv
                if vv < 0 or vv > 3:
                    continue
                wv = fv if dv == 1 else 1.0 - fv
                for du in range(2):
                    uu = u0 + du
                    if uu < 0 or uu > 3:
                        continue
                    wu = fu if du == 1 else 1.0 - fu
                    base = (vv * 4 + uu) * 8
                    wo = wgt * wv * wu
                    desc[base + o0] += wo * (1.0 - fo)
                    o1 = o0 + 1
                    if o1 >= 8:
                        o1 -= 8
                    desc[base + o1] += wo * fo
    return desc


def sift_accum_np(mag, ang, theta):
    n = mag.shape[0]
    c = (n - 1) * 0.5
    bin_size = n / 4.0
    sigma = 0.5 * n
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    ys, xs = np.mgrid[0:n, 0:n]
    dx = (xs - c).astype(np.float64)
    dy = (ys - c).astype(np.float64)
    u = (cos_t * dx + sin_t * dy) / bin_size
    v = (-sin_t * dx + cos_t * dy) / bin_size
    ub = u + 1.5
    vb = v + 1.5
    wgt = mag * np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
    a = np.mod(ang - theta, TWO_PI)
    ob = a / TWO_PI * 8.0
    o0 = ob.astype(np.int64) % 8
    fo = ob - np.floor(ob)
    u0 = np.floor(ub).astype(np.int64)
    v0 = np.floor(vb).astype(np.int64)
    fu = ub - u0
    fv = vb - v0
    desc = np.zeros(128, np.float64)
    sel_base = (mag > 0.0) & (ub > -1.0) & (ub < 4.0) & (vb > -1.0) & (vb < 4.0)
    for dv in range(2):
        vv = v0 + dv
        wv = np.where(dv == 1, fv, 1.0 - fv)
        for du in range(2):
            uu = u0 + du
            wu = np.where(du == 1, fu, 1.0 - fu)
            sel = sel_base & (uu >= 0) & (uu <= 3) & (vv >= 0) & (vv <= 3)
            if not sel.any():
                continue
            base = (vv[sel] * 4 + np.clip(uu[sel], 0, 3)) * 8
            wo = (wgt * wv * wu)[sel]
            np.add.at(desc, base + o0[sel], wo * (1.0 - fo[sel]))
            np.add.at(desc, base + (o0[sel] + 1) % 8, wo * fo[sel])
    return desc


sift_accum_nb = _jit(_sift_accum_loop)
sift_accum = sift_accum_nb if USE_NUMBA else sift_accum_np


# ---------------------------------------------------------------------------
# 3x3x3 scale-space extremum mask
# ---------------------------------------------------------------------------

def extrema3d_np(below, cur, above, thr):
    h, w = cur.shape
    c = cur[1:-1, 1:-1]
    pos = c > thr
    neg = c < -thr
    if not (pos.any() or neg.any()):
        return np.zeros((h, w), np.uint8)
    gt = np.ones_like(pos)
    lt = np.ones_like(neg)
    for plane in (below, cur, above):
        for dy in range(3):
            for dx in range(3):
                if plane is cur and dy == 1 and dx == 1:
                    continue
                nb = plane[dy:dy + h - 2, dx:dx + w - 2]
                gt &= c > nb
                lt &= c < nb
    out = np.zeros((h, w), np.uint8)
    out[1:-1, 1:-1] = ((pos & gt) | (neg & lt)).astype(np.uint8)
    return out


def _extrema3d_loop(below, cur, above, thr):
    h, w = cur.shape
    out = np.zeros((h, w), np.uint8)
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            v = cur[y, x]
            if v > thr:
                ismax = True
                for dy in range(-1, 2):
                    if not ismax:
                        break
                    for dx in range(-1, 2):
                        if v <= below[y + dy, x + dx] or v <= above[y + dy, x + dx]:
                            ismax = False
                            break
                        if (dy != 0 or dx != 0) and v <= cur[y + dy, x + dx]:
                            ismax = False
                            break
                if ismax:
                    out[y, x] = 1
            elif v < -thr:
                ismin = True
                for dy in range(-1, 2):
                    if not ismin:
                        break
                    for dx in range(-1, 2):
                        if v >= below[y + dy, x + dx] or v >= above[y + dy, x + dx]:
                            ismin = False
                            break
                        if (dy != 0 or dx != 0) and v >= cur[y + dy, x + dx]:
                            ismin = False
                            break
                if ismin:
                    out[y, x] = 1
    return out


extrema3d_nb = _jit(_extrema3d_loop)
extrema3d = extrema3d_nb if USE_NUMBA else extrema3d_np


# ---------------------------------------------------------------------------
# Hessian determinant response (scale-normalized by sigma^4)
# ---------------------------------------------------------------------------

def _hessian_resp_loop(img, s4):
    h, w = img.shape
    out = np.zeros((h, w), np.float64)
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            v2 = 2.0 * img[y, x]
            lxx = img[y, x + 1] + img[y, x - 1] - v2
            lyy = img[y + 1, x] + img[y - 1, x] - v2
            lxy = 0.25 * (img[y + 1, x + 1] + img[y - 1, x - 1]
                          - img[y + 1, x - 1] - img[y - 1, x + 1])
            out[y, x] = s4 * (lxx * lyy - lxy * lxy)
    return out


def hessian_resp_np(img, s4):
    h, w = img.shape
    out = np.zeros((h, w), np.float64)
    v2 = 2.0 * img[1:-1, 1:-1]
    lxx = img[1:-1, 2:] + img[1:-1, :-2] - v2
    lyy = img[2:, 1:-1] + img[:-2, 1:-1] - v2
    lxy = 0.25 * (img[2:, 2:] + img[:-2, :-2] - img[2:, :-2] - img[:-2, 2:])
    out[1:-1, 1:-1] = s4 * (lxx * lyy - lxy * lxy)
    return out


hessian_resp_nb = _jit(_hessian_resp_loop)
hessian_resp = hessian_resp_nb if USE_NUMBA else hessian_resp_np


# ---------------------------------------------------------------------------
# iterative affine shape adaptation from the second-moment matrix
# ---------------------------------------------------------------------------

def _adapt_shape_loop(img, px, py, sigma, max_iter, conv_ratio, max_aniso):
    """Baumberg iteration around (px, py) at detection scale sigma.

    Samples the full-resolution image through the current shape, smooths
    the warped patch, and re-estimates the second-moment matrix.  Returns
    (a, b, c, d, ok): det-1 shape matrix mapping the normalized
    (isotropic) frame to image coordinates, ok=0 when diverged or the
    sampling window left the image.
    """
    h, w = img.shape
    pr = 9  # patch radius; 19x19 samples spanning 3*sigma
    n = 2 * pr + 1
    step = sigma / 3.0
    wsig = pr / 3.0
    # small post-warp smoothing, the differentiation scale in patch units
    ksz = 5
    khalf = 2
    kern = np.empty(ksz, np.float64)
    ksum = 0.0
    for i in range(ksz):
        kern[i] = math.exp(-((i - khalf) * (i - khalf)) / 2.0)
        ksum += kern[i]
    for i in range(ksz):
        kern[i] /= ksum
    a = 1.0
    b = 0.0
    c = 0.0
    d = 1.0
    patch = np.empty((n, n), np.float64)
    tmp = np.empty((n, n), np.float64)
    for _ in range(max_iter):
        # sample the shape-normalized neighborhood
        for iy in range(n):
            for ix in range(n):
                u = (ix - pr) * step
                v = (iy - pr) * step
                sx = px + a * u + b * v
                sy = py + c * u + d * v
                if sx < 0.0 or sx > w - 1.0 or sy < 0.0 or sy > h - 1.0:
                    return 1.0, 0.0, 0.0, 1.0, 0
                x0 = int(sx)
                y0 = int(sy)
                x1 = x0 + 1
                y1 = y0 + 1
                if x1 > w - 1:
                    x1 = w - 1
                if y1 > h - 1:
                    y1 = h - 1
                fx = sx - x0
                fy = sy - y0
                v0 = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
                v1 = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
                patch[iy, ix] = v0 * (1.0 - fy) + v1 * fy
        # smooth the patch (separable, edge replication)
        for iy in range(n):
            for ix in range(n):
                acc = 0.0
                for i in range(ksz):
                    xx = ix + i - khalf
                    if xx < 0:
                        xx = 0
                    elif xx >= n:
                        xx = n - 1
                    acc += patch[iy, xx] * kern[i]
                tmp[iy, ix] = acc
        for iy in range(n):
            for ix in range(n):
                acc = 0.0
                for i in range(ksz):
                    yy = iy + i - khalf
                    if yy < 0:
                        yy = 0
                    elif yy >= n:
                        yy = n - 1
                    acc += tmp[yy, ix] * kern[i]
                patch[iy, ix] = acc
        # Gaussian-weighted second-moment matrix of the patch
        mxx = 0.0
        mxy = 0.0
        myy = 0.0
        inv2s2 = 1.0 / (2.0 * wsig * wsig)
        for iy in range(1, n - 1):
            for ix in range(1, n - 1):
                gx = 0.5 * (patch[iy, ix + 1] - patch[iy, ix - 1])
                gy = 0.5 * (patch[iy + 1, ix] - patch[iy - 1, ix])
                du = ix - pr
                dv = iy - pr
                wgt = math.exp(-(du * du + dv * dv) * inv2s2)
                mxx += wgt * gx * gx
                mxy += wgt * gx * gy
                myy += wgt * gy * gy
        tr = mxx + myy
        if tr <= 1e-12:
            return 1.0, 0.0, 0.0, 1.0, 0
        # eigen decomposition of the symmetric 2x2 moment matrix
        disc = math.sqrt((mxx - myy) * (mxx - myy) + 4.0 * mxy * mxy)
        l1 = 0.5 * (tr + disc)
        l2 = 0.5 * (tr - disc)
        if l2 <= 1e-14 * l1:
            return 1.0, 0.0, 0.0, 1.0, 0
        if disc < 1e-12 * tr:
            e1x, e1y = 1.0, 0.0
        elif abs(mxy) > 1e-14:
            e1x, e1y = l1 - myy, mxy
        elif mxx >= myy:
            e1x, e1y = 1.0, 0.0
        else:
            e1x, e1y = 0.0, 1.0
        nrm = math.sqrt(e1x * e1x + e1y * e1y)
        e1x /= nrm
        e1y /= nrm
        e2x, e2y = -e1y, e1x
        # M^(-1/2), normalized to unit determinant
        s1 = 1.0 / math.sqrt(l1)
        s2 = 1.0 / math.sqrt(l2)
        g = math.sqrt(s1 * s2)
        s1 /= g
        s2 /= g
        q11 = s1 * e1x * e1x + s2 * e2x * e2x
        q12 = s1 * e1x * e1y + s2 * e2x * e2y
        q22 = s1 * e1y * e1y + s2 * e2y * e2y
        na = a * q11 + b * q12
        nb = a * q12 + b * q22
        nc = c * q11 + d * q12
        nd = c * q12 + d * q22
        a, b, c, d = na, nb, nc, nd
        # reject needle-like shapes
        saa = a * a + c * c
        sbb = b * b + d * d
        sab = a * b + c * d
        sdisc = math.sqrt((saa - sbb) * (saa - sbb) + 4.0 * sab * sab)
        smax = 0.5 * (saa + sbb + sdisc)
        smin = 0.5 * (saa + sbb - sdisc)
        if smin <= 0.0 or math.sqrt(smax / smin) > max_aniso:
            return a, b, c, d, 0
        if math.sqrt(l1 / l2) < conv_ratio:
            return a, b, c, d, 1
    return a, b, c, d, 0


adapt_shape_nb = _jit(_adapt_shape_loop)
adapt_shape = adapt_shape_nb if USE_NUMBA else _adapt_shape_loop


# ---------------------------------------------------------------------------
# MSER component tree (union-find over intensity levels, with moments)
# ---------------------------------------------------------------------------

def _mser_tree_loop(levels, h, w):
    """Grow components over 256 intensity levels and record their history.

    levels: uint8 image flattened row-major.  Returns the record arrays
    (per component-level snapshot) and, per canonical component chain, the
    tail record index and death level:

      rec_prev, rec_level, rec_area, rec_mx, rec_my, rec_mxx, rec_myy,
      rec_mxy, chain_tail, chain_death
    """
    npx = h * w
    # counting sort of pixel indices by level
    counts = np.zeros(257, np.int64)
    for i in range(npx):
        counts[levels[i] + 1] += 1
    for l in range(1, 257):
        counts[l] += counts[l - 1]
    order = np.empty(npx, np.int64)
    fill = counts[:256].copy()
    for i in range(npx):
        l = levels[i]
        order[fill[l]] = i
        fill[l] += 1

    parent = np.full(npx, -1, np.int64)   # union-find; -1 = inactive
    area = np.zeros(npx, np.int64)
    mx = np.zeros(npx, np.float64)
    my = np.zeros(npx, np.float64)
    mxx = np.zeros(npx, np.float64)
    myy = np.zeros(npx, np.float64)
    mxy = np.zeros(npx, np.float64)
    last_rec = np.full(npx, -1, np.int64)

    cap = 2 * npx + 16
    rec_prev = np.empty(cap, np.int64)
    rec_level = np.empty(cap, np.int64)
    rec_area = np.empty(cap, np.int64)
    rec_mx = np.empty(cap, np.float64)
    rec_my = np.empty(cap, np.float64)
    rec_mxx = np.empty(cap, np.float64)
    rec_myy = np.empty(cap, np.float64)
    rec_mxy = np.empty(cap, np.float64)
    nrec = 0

    chain_tail = np.empty(npx, np.int64)
    chain_death = np.empty(npx, np.int64)
    nchain = 0

    for oi in range(npx):
        p = order[oi]
        lvl = levels[p]
        y = p // w
        x = p - y * w
        parent[p] = p
        area[p] = 1
        mx[p] = x
        my[p] = y
        mxx[p] = x * x
        myy[p] = y * y
        mxy[p] = x * y
        last_rec[p] = -1
        # union with active 4-neighbors
        for ni in range(4):
            if ni == 0:
                if x == 0:
                    continue
                q = p - 1
            elif ni == 1:
                if x == w - 1:
                    continue
                q = p + 1
            elif ni == 2:
                if y == 0:
                    continue
                q = p - w
            else:
                if y == h - 1:
                    continue
                q = p + w
            if parent[q] < 0:
                continue
            # find roots with path compression
            r1 = p
            while parent[r1] != r1:
                r1 = parent[r1]
            r2 = q
            while parent[r2] != r2:
                r2 = parent[r2]
            rr = p
            while parent[rr] != rr:
                nxt = parent[rr]
                parent[rr] = r1
                rr = nxt
            rr = q
            while parent[rr] != rr:
                nxt = parent[rr]
                parent[rr] = r2
                rr = nxt
            if r1 == r2:
                continue
            # merge smaller into larger (ties: lower index survives)
            if area[r1] > area[r2] or (area[r1] == area[r2] and r1 < r2):
                big, small = r1, r2
            else:
                big, small = r2, r1
            # the absorbed component's chain dies at this level
            if last_rec[small] >= 0:
                chain_tail[nchain] = last_rec[small]
                chain_death[nchain] = lvl
                nchain += 1
            parent[small] = big
            area[big] += area[small]
            mx[big] += mx[small]
            my[big] += my[small]
            mxx[big] += mxx[small]
            myy[big] += myy[small]
            mxy[big] += mxy[small]

        # refresh the record of the component now containing p
        r = p
        while parent[r] != r:
            r = parent[r]
        lr = last_rec[r]
        if lr >= 0 and rec_level[lr] == lvl:
            rec_area[lr] = area[r]
            rec_mx[lr] = mx[r]
            rec_my[lr] = my[r]
            rec_mxx[lr] = mxx[r]
            rec_myy[lr] = myy[r]
            rec_mxy[lr] = mxy[r]
        else:
            rec_prev[nrec] = lr
            rec_level[nrec] = lvl
            rec_area[nrec] = area[r]
            rec_mx[nrec] = mx[r]
            rec_my[nrec] = my[r]
            rec_mxx[nrec] = mxx[r]
            rec_myy[nrec] = myy[r]
            rec_mxy[nrec] = mxy[r]
            last_rec[r] = nrec
            nrec += 1

    # surviving roots die past the last level
    for p in range(npx):
        if parent[p] == p and last_rec[p] >= 0:
            chain_tail[nchain] = last_rec[p]
            chain_death[nchain] = 256
            nchain += 1

    return (rec_prev[:nrec], rec_level[:nrec], rec_area[:nrec],
            rec_mx[:nrec], rec_my[:nrec], rec_mxx[:nrec], rec_myy[:nrec],
            rec_mxy[:nrec], chain_tail[:nchain], chain_death[:nchain])


mser_tree_nb = _jit(_mser_tree_loop)
mser_tree = mser_tree_nb if USE_NUMBA else _mser_tree_loop


# ---------------------------------------------------------------------------
# brute-force k nearest neighbors (squared L2 via BLAS, shared by both paths)
# ---------------------------------------------------------------------------

def knn_brute(queries, base, k):
    """Exact k-NN; returns (idx, dist) with rows sorted by ascending L2."""
    nq = queries.shape[0]
    nb = base.shape[0]
    k = min(k, nb)
    idx = np.empty((nq, k), np.int64)
    dist = np.empty((nq, k), np.float64)
    b2 = np.einsum("ij,ij->i", base, base)
    chunk = max(1, int(2e7) // max(nb, 1))
    for s in range(0, nq, chunk):
        q = queries[s:s + chunk]
        d2 = q @ base.T
        d2 *= -2.0
        d2 += b2
        d2 += np.einsum("ij,ij->i", q, q)[:, None]
        np.maximum(d2, 0.0, out=d2)
        if k < nb:
            part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        else:
            part = np.broadcast_to(np.arange(nb), (q.shape[0], nb)).copy()
        pd = np.take_along_axis(d2, part, axis=1)
        srt = np.argsort(pd, axis=1, kind="stable")
        idx[s:s + chunk] = np.take_along_axis(part, srt, axis=1)
        dist[s:s + chunk] = np.sqrt(np.take_along_axis(pd, srt, axis=1))
    return idx, dist


# ---------------------------------------------------------------------------
# randomized kd-forest search (best-bin-first with a bounded check budget)
# ---------------------------------------------------------------------------

def _kd_search_loop(node_dim, node_val, node_left, node_right,
                    node_start, node_count, leaf_pts, roots, data,
                    queries, k, max_checks):
    nq = queries.shape[0]
    npts = data.shape[0]
    out_idx = np.full((nq, k), -1, np.int64)
    out_dist = np.full((nq, k), np.inf, np.float64)
    visited = np.full(npts, -1, np.int64)
    heap_cap = 4 * max_checks + 64
    heap_d = np.empty(heap_cap, np.float64)
    heap_n = np.empty(heap_cap, np.int64)

    for qi in range(nq):
        q = queries[qi]
        best_d = out_dist[qi]
        best_i = out_idx[qi]
        nbest = 0
        heap_size = 0
        # seed the priority queue with every tree root
        for r in range(roots.shape[0]):
            heap_d[heap_size] = 0.0
            heap_n[heap_size] = roots[r]
            heap_size += 1
            j = heap_size - 1
            while j > 0:
                par = (j - 1) // 2
                if heap_d[par] <= heap_d[j]:
                    break
                heap_d[par], heap_d[j] = heap_d[j], heap_d[par]
                heap_n[par], heap_n[j] = heap_n[j], heap_n[par]
                j = par
        checks = 0
        while heap_size > 0 and checks < max_checks:
            # pop the closest pending branch
            bound = heap_d[0]
            node = heap_n[0]
            heap_size -= 1
            heap_d[0] = heap_d[heap_size]
            heap_n[0] = heap_n[heap_size]
            j = 0
            while True:
                l = 2 * j + 1
                rgt = l + 1
                small = j
                if l < heap_size and heap_d[l] < heap_d[small]:
                    small = l
                if rgt < heap_size and heap_d[rgt] < heap_d[small]:
                    small = rgt
                if small == j:
                    break
                heap_d[small], heap_d[j] = heap_d[j], heap_d[small]
                heap_n[small], heap_n[j] = heap_n[j], heap_n[small]
                j = small
            if nbest == k and bound >= best_d[k - 1]:
                continue
            # descend to a leaf, pushing the far branches
            while node_dim[node] >= 0:
                d = node_dim[node]
                diff = q[d] - node_val[node]
                if diff <= 0.0:
                    near = node_left[node]
                    far = node_right[node]
                else:
                    near = node_right[node]
                    far = node_left[node]
                fd = bound + diff * diff
                if heap_size < heap_cap and (nbest < k or fd < best_d[k - 1]):
                    heap_d[heap_size] = fd
                    heap_n[heap_size] = far
                    heap_size += 1
                    j = heap_size - 1
                    while j > 0:
                        par = (j - 1) // 2
                        if heap_d[par] <= heap_d[j]:
                            break
                        heap_d[par], heap_d[j] = heap_d[j], heap_d[par]
                        heap_n[par], heap_n[j] = heap_n[j], heap_n[par]
                        j = par
                node = near
            # scan the leaf bucket; the budget counts leaf visits
            checks += 1
            st = node_start[node]
            cn = node_count[node]
            for t in range(st, st + cn):
                pt = leaf_pts[t]
                if visited[pt] == qi:
                    continue
                visited[pt] = qi
                acc = 0.0
                for d in range(data.shape[1]):
                    df = q[d] - data[pt, d]
                    acc += df * df
                if nbest < k or acc < best_d[k - 1]:
                    # insertion sort into the running k-best
                    j = nbest if nbest < k else k - 1
                    if nbest < k:
                        nbest += 1
                    while j > 0 and best_d[j - 1] > acc:
                        best_d[j] = best_d[j - 1]
                        best_i[j] = best_i[j - 1]
                        j -= 1
                    best_d[j] = acc
                    best_i[j] = pt
    return out_idx, np.sqrt(out_dist)


kd_search_nb = _jit(_kd_search_loop)
kd_search = kd_search_nb if USE_NUMBA else _kd_search_loop
