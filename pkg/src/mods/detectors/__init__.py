"""Affine/similarity-covariant region detectors."""

from ..frames import DOG, HESSAFF, MSER
from .dog import DogParams, detect_dog
from .hessaff import HessAffParams, detect_hessian_affine
from .mser import MserParams, detect_mser

_DETECT = {
    DOG: detect_dog,
    HESSAFF: detect_hessian_affine,
    MSER: detect_mser,
}

DEFAULT_PARAMS = {
    DOG: DogParams(),
    HESSAFF: HessAffParams(),
    MSER: MserParams(),
}


def detect(name, img, params=None):
    try:
        fn = _DETECT[name]
    except KeyError:
        raise ValueError(f"unknown detector {name!r}") from None
    return fn(img, params)


__all__ = [
    "DOG", "HESSAFF", "MSER",
    "DogParams", "HessAffParams", "MserParams",
    "detect", "detect_dog", "detect_hessian_affine", "detect_mser",
    "DEFAULT_PARAMS",
]
