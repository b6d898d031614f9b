"""Oriented affine region frames shared by the detectors and the matcher."""

import math
from dataclasses import dataclass

import numpy as np

MSER = "mser"
HESSAFF = "hessaff"
DOG = "dog"
DETECTORS = (MSER, HESSAFF, DOG)


@dataclass
class AffineFrame:
    """Center, local affine shape (unit circle -> measurement ellipse),
    characteristic radius and provenance of one detected region."""

    x: float
    y: float
    a11: float
    a12: float
    a21: float
    a22: float
    scale: float
    orientation: float = 0.0
    detector: str = DOG
    view_id: int = -1
    response: float = 0.0

    @property
    def shape(self):
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    def with_shape(self, m, **overrides):
        kw = dict(x=self.x, y=self.y,
                  a11=float(m[0, 0]), a12=float(m[0, 1]),
                  a21=float(m[1, 0]), a22=float(m[1, 1]),
                  scale=math.sqrt(abs(float(np.linalg.det(m)))),
                  orientation=self.orientation, detector=self.detector,
                  view_id=self.view_id, response=self.response)
        kw.update(overrides)
        return AffineFrame(**kw)


def circular_frame(x, y, scale, detector=DOG, view_id=-1, response=0.0):
    return AffineFrame(x, y, scale, 0.0, 0.0, scale, scale,
                       detector=detector, view_id=view_id, response=response)


def frame_from_moments(cx, cy, cov, detector=MSER, view_id=-1, response=0.0):
    """Build the frame whose ellipse has the region's second moments.

    A filled ellipse with semi-axes (a, b) has covariance eigenvalues
    (a^2/4, b^2/4), so the shape matrix is twice the covariance square
    root.  Returns None for degenerate (sub-pixel thin) regions.
    """
    c = np.asarray(cov, np.float64)
    evals, evecs = np.linalg.eigh(c)
    if evals[0] <= 1e-9:
        return None
    shape = 2.0 * (evecs * np.sqrt(evals)) @ evecs.T
    det = float(np.linalg.det(shape))
    if det <= 1e-9:
        return None
    return AffineFrame(float(cx), float(cy),
                       float(shape[0, 0]), float(shape[0, 1]),
                       float(shape[1, 0]), float(shape[1, 1]),
                       math.sqrt(det), detector=detector,
                       view_id=view_id, response=response)


def sort_frames(fs):
    """Deterministic ordering: strongest response first, then position."""
    return sorted(fs, key=lambda f: (-f.response, f.y, f.x, f.scale))


def frames_to_text(fs):
    lines = []
    for f in fs:
        lines.append(f"{f.x!r} {f.y!r} {f.a11!r} {f.a12!r} {f.a21!r} "
                     f"{f.a22!r} {f.scale!r} {f.detector} {f.view_id}")
    return "\n".join(lines) + ("\n" if lines else "")


def frames_from_text(text):
    fs = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 9:
            raise ValueError(f"bad frame line: {line!r}")
        fs.append(AffineFrame(
            x=float(parts[0]), y=float(parts[1]),
            a11=float(parts[2]), a12=float(parts[3]),
            a21=float(parts[4]), a22=float(parts[5]),
            scale=float(parts[6]), detector=parts[7], view_id=int(parts[8])))
    return fs


def descriptors_to_text(fs, descs):
    lines = []
    for f, d in zip(fs, descs):
        head = (f"{f.x!r} {f.y!r} {f.a11!r} {f.a12!r} {f.a21!r} "
                f"{f.a22!r} {f.scale!r} {f.detector} {f.view_id}")
        vals = " ".join(repr(float(v)) for v in d)
        lines.append(head + "\n" + vals)
    return "\n".join(lines) + ("\n" if lines else "")
