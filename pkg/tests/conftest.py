import numpy as np
import pytest

from mods.image import gaussian_blur


def make_scene(seed, h=240, w=320, n_shapes=60):
    """Structured synthetic scene: smooth shading plus shapes at many scales.

    Deterministic per seed; rich enough for MSER/Hessian-Affine and hard
    enough that heavy tilts defeat plain detection.
    """
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:h, 0:w]
    img = 0.45 + 0.25 * np.sin(2 * np.pi * xs * rng.uniform(0.5, 2.0) / w) \
        * np.cos(2 * np.pi * ys * rng.uniform(0.5, 2.0) / h)
    img += 0.05 * gaussian_blur(rng.random((h, w)), 8.0, 8.0)
    for _ in range(n_shapes):
        cx = rng.uniform(10, w - 10)
        cy = rng.uniform(10, h - 10)
        r = rng.uniform(3, 22)
        val = rng.uniform(0.0, 1.0)
        kind = rng.integers(0, 3)
        dx = xs - cx
        dy = ys - cy
        if kind == 0:
            m = dx * dx + dy * dy <= r * r
        elif kind == 1:
            hw, hh = r, rng.uniform(3, 22)
            ang = rng.uniform(0, np.pi)
            u = dx * np.cos(ang) + dy * np.sin(ang)
            v = -dx * np.sin(ang) + dy * np.cos(ang)
            m = (np.abs(u) <= hw) & (np.abs(v) <= hh)
        else:
            # triangle: intersection of three half-planes
            angs = np.sort(rng.uniform(0, 2 * np.pi, 3))
            px = cx + r * np.cos(angs)
            py = cy + r * np.sin(angs)
            m = np.ones((h, w), bool)
            for i in range(3):
                j = (i + 1) % 3
                ex, ey = px[j] - px[i], py[j] - py[i]
                m &= (ex * (ys - py[i]) - ey * (xs - px[i])) >= 0
        img[m] = val
    img = gaussian_blur(img, 0.6, 0.6)
    return np.clip(img, 0.0, 1.0)


@pytest.fixture(scope="session")
def scene():
    return make_scene(0)


@pytest.fixture(scope="session")
def small_scene():
    return make_scene(5, h=160, w=200, n_shapes=40)
