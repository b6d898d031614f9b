"""Gaussian scale-space shared by the DoG and Hessian-Affine detectors."""

import math

import numpy as np

from .. import _kernels as K
from ..image import gaussian_kernel


class Octave:
    __slots__ = ("levels", "sigmas", "stride")

    def __init__(self, levels, sigmas, stride):
        self.levels = levels    # n_scales + 3 images, same size
        self.sigmas = sigmas    # blur of each level in octave coordinates
        self.stride = stride    # octave-to-image coordinate factor (2**o)


def _blur(img, sigma):
    if sigma <= 0.0:
        return img.copy()
    k = gaussian_kernel(sigma)
    return K.conv_v(K.conv_h(img, k), k)


def build_pyramid(img, n_scales=3, sigma0=1.6, sigma_in=0.5, min_size=16):
    """Octave stack; each octave holds n_scales+3 levels at sigma0*k^i.

    The next octave decimates the level at 2*sigma0 by keeping even pixels,
    so level coordinates map to image coordinates by the octave stride.
    """
    img = np.ascontiguousarray(img, np.float64)
    k = 2.0 ** (1.0 / n_scales)
    base = _blur(img, math.sqrt(max(sigma0 ** 2 - sigma_in ** 2, 1e-10)))
    octaves = []
    stride = 1
    while min(base.shape) >= min_size:
        levels = [base]
        sigmas = [sigma0]
        for i in range(1, n_scales + 3):
            s_total = sigma0 * k ** i
            s_inc = math.sqrt(max(s_total ** 2 - sigmas[-1] ** 2, 1e-10))
            levels.append(_blur(levels[-1], s_inc))
            sigmas.append(s_total)
        octaves.append(Octave(levels, sigmas, stride))
        base = np.ascontiguousarray(levels[n_scales][::2, ::2])
        stride *= 2
    return octaves
