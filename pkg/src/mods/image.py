"""Grayscale raster primitives.

Images are 2-D float64 arrays with luminance in [0, 1], row-major, pixel
centers at integer coordinates.  Affine maps are 3x3 float64 matrices
acting on column vectors (x, y, 1), always in the source -> destination
direction; warping inverts them internally.
"""

import math
from pathlib import Path

import numpy as np

from . import _kernels as K

# ITU-R BT.601 luminance weights, the convention shared by common SIFT stacks
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def to_grayscale(raw):
    """Convert a 1-, 3- or 4-channel raster to a [0,1] float image."""
    arr = np.asarray(raw)
    if arr.ndim == 2:
        chans = 1
    elif arr.ndim == 3 and arr.shape[2] in (1, 3, 4):
        chans = arr.shape[2]
    else:
        raise ValueError(f"unsupported channel layout: shape {arr.shape}")

    if arr.dtype == np.uint8:
        scale = 255.0
    elif arr.dtype == np.uint16:
        scale = 65535.0
    elif np.issubdtype(arr.dtype, np.floating):
        scale = 1.0
    elif np.issubdtype(arr.dtype, np.integer):
        scale = float(np.iinfo(arr.dtype).max)
    else:
        raise ValueError(f"unsupported sample type: {arr.dtype}")

    f = arr.astype(np.float64) / scale
    if chans == 1:
        gray = f if f.ndim == 2 else f[:, :, 0]
    else:
        r, g, b = f[:, :, 0], f[:, :, 1], f[:, :, 2]
        gray = LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
    return np.clip(np.ascontiguousarray(gray), 0.0, 1.0)


def gaussian_kernel(sigma):
    """Discrete 1-D Gaussian, radius ceil(3*sigma), normalized to sum 1."""
    if sigma <= 0.0:
        return np.ones(1, np.float64)
    r = int(math.ceil(3.0 * sigma))
    xs = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img, sigma_x, sigma_y):
    """Separable Gaussian smoothing with edge replication; sigma 0 = no-op."""
    if sigma_x < 0.0 or sigma_y < 0.0:
        raise ValueError("sigma must be non-negative")
    out = np.asarray(img, np.float64)
    if sigma_x > 0.0:
        out = K.conv_h(out, gaussian_kernel(sigma_x))
    if sigma_y > 0.0:
        out = K.conv_v(out, gaussian_kernel(sigma_y))
    if out is img:
        out = out.copy()
    return np.clip(out, 0.0, 1.0)


def _as_3x3(mat):
    m = np.asarray(mat, np.float64)
    if m.shape == (2, 3):
        m = np.vstack([m, [0.0, 0.0, 1.0]])
    if m.shape != (3, 3):
        raise ValueError("affine map must be 2x3 or 3x3")
    return m


def warp_affine(img, mat, out_w, out_h):
    """Resample through the inverse of ``mat`` (source -> destination).

    Bilinear sampling; destination pixels that map outside the source
    domain are zero.
    """
    m = _as_3x3(mat)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) < 1e-12:
        raise ValueError("singular affine map")
    inv = np.linalg.inv(m)
    img = np.ascontiguousarray(img, np.float64)
    out = K.warp_bilinear(img, inv[0, 0], inv[0, 1], inv[0, 2],
                          inv[1, 0], inv[1, 1], inv[1, 2],
                          int(out_h), int(out_w))
    return np.clip(out, 0.0, 1.0)


def scaling_map(sx, sy, w, h):
    """Affine aligning the continuous image domain with the scaled canvas.

    Pixel i covers [i-0.5, i+0.5]; the map sends [-0.5, w-0.5] onto
    [-0.5, round(sx*w)-0.5] and likewise vertically.
    """
    out_w = max(1, int(round(sx * w)))
    out_h = max(1, int(round(sy * h)))
    m = np.array([[sx, 0.0, 0.5 * sx - 0.5],
                  [0.0, sy, 0.5 * sy - 0.5],
                  [0.0, 0.0, 1.0]])
    return m, out_w, out_h


def downsample(img, factor, sigma_base, smooth_identity=False):
    """Anti-aliased resampling to (round(S*w), round(S*h)), 0 < S <= 1.

    The smoothing sigma is sigma_base/S in source coordinates (sigma_base
    in target coordinates).  At S=1 the image passes through unchanged
    unless ``smooth_identity`` asks for the sigma_base blur.
    """
    if not 0.0 < factor <= 1.0:
        raise ValueError(f"scale factor must be in (0, 1], got {factor}")
    img = np.asarray(img, np.float64)
    h, w = img.shape
    if factor == 1.0:
        if smooth_identity and sigma_base > 0.0:
            return gaussian_blur(img, sigma_base, sigma_base)
        return img.copy()
    sigma = sigma_base / factor
    smooth = gaussian_blur(img, sigma, sigma)
    m, out_w, out_h = scaling_map(factor, factor, w, h)
    return warp_affine(smooth, m, out_w, out_h)


# ---------------------------------------------------------------------------
# file I/O: PNG and JPEG via Pillow, binary PGM (P5) natively
# ---------------------------------------------------------------------------

def _read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # header tokens may be separated by whitespace and '#' comments
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = tokens
    if maxval < 256:
        raw = np.frombuffer(data, np.uint8, count=w * h, offset=pos)
    else:
        raw = np.frombuffer(data, ">u2", count=w * h, offset=pos)
    return raw.reshape(h, w).astype(np.float64) / maxval


def _write_pgm(path, img):
    u8 = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    h, w = u8.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(u8.tobytes())


def load_image(path):
    """Read PNG, JPEG or binary PGM as a grayscale [0,1] image."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(str(p))
    if p.suffix.lower() == ".pgm":
        return _read_pgm(p)
    from PIL import Image as PILImage

    with PILImage.open(p) as im:
        arr = np.asarray(im)
    return to_grayscale(arr)


def save_image(path, img):
    """Write a grayscale image as PNG or PGM (suffix decides)."""
    p = Path(path)
    if p.suffix.lower() == ".pgm":
        _write_pgm(p, img)
        return
    from PIL import Image as PILImage

    u8 = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(u8, mode="L").save(p, format="PNG")


def save_rgb(path, rgb):
    """Write an (h, w, 3) uint8 array as PNG."""
    from PIL import Image as PILImage

    PILImage.fromarray(np.asarray(rgb, np.uint8), mode="RGB").save(Path(path), format="PNG")
