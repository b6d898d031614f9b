"""Side-by-side match visualization."""

import numpy as np

BLUE = (40, 90, 230)
GREEN = (60, 200, 60)
LINE = (200, 200, 80)
LEGEND = "blue: detected centers   green: reprojected centers"


def _stamp(canvas, x, y, color, r=1):
    h, w = canvas.shape[:2]
    xi, yi = int(round(x)), int(round(y))
    if not (0 <= xi < w and 0 <= yi < h):
        return
    x0, x1 = max(0, xi - r), min(w, xi + r + 1)
    y0, y1 = max(0, yi - r), min(h, yi + r + 1)
    canvas[y0:y1, x0:x1] = color
    canvas[yi, xi] = color


def render_match_overlay(img1, img2, result, h_gt=None):
    """(h, w, 3) uint8 canvas: both images, inlier dot pairs, optional
    ground-truth reprojections, and a legend when anything is drawn.

    Canvas is exactly (max(h1, h2), w1 + w2); with no correspondences the
    output is the bare concatenation.
    """
    img1 = np.asarray(img1, np.float64)
    img2 = np.asarray(img2, np.float64)
    h1, w1 = img1.shape
    h2, w2 = img2.shape
    canvas = np.zeros((max(h1, h2), w1 + w2, 3), np.uint8)
    canvas[:h1, :w1] = (np.clip(img1, 0, 1) * 255.0)[..., None].astype(np.uint8)
    canvas[:h2, w1:w1 + w2] = (np.clip(img2, 0, 1) * 255.0)[..., None].astype(np.uint8)

    tcs = result.correspondences if result is not None else []
    geom = result.geometry if result is not None else None
    if not tcs or geom is None:
        return canvas
    mask = np.asarray(geom.inlier_mask, bool)
    pairs = [t for t, m in zip(tcs, mask) if m]
    if not pairs:
        return canvas

    from PIL import Image, ImageDraw

    im = Image.fromarray(canvas)
    draw = ImageDraw.Draw(im)
    for t in pairs:
        draw.line([(t.frame1.x, t.frame1.y), (t.frame2.x + w1, t.frame2.y)],
                  fill=LINE, width=1)
    draw.text((4, canvas.shape[0] - 12), LEGEND, fill=(255, 255, 255))
    canvas = np.array(im)

    for t in pairs:
        _stamp(canvas, t.frame1.x, t.frame1.y, BLUE)
        _stamp(canvas, t.frame2.x + w1, t.frame2.y, BLUE)
    if h_gt is not None:
        h_gt = np.asarray(h_gt, np.float64)
        for t in pairs:
            p = h_gt @ np.array([t.frame1.x, t.frame1.y, 1.0])
            _stamp(canvas, p[0] / p[2] + w1, p[1] / p[2], GREEN)
    return canvas
