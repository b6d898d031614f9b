"""Affine view synthesis: tilt/longitude/scale decomposition, view-set
enumeration, rendering, and frame backprojection.

The synthesis pipeline for one view (S, t, phi):

  1. anti-aliased downsampling by S,
  2. in-plane rotation by phi into a tight canvas (zero fill),
  3. anisotropic smoothing, sigma_base vertical and t*sigma_base horizontal,
  4. horizontal shrink by t.

``ViewSpec.frame_map`` is the exact 3x3 affine realized by these stages,
mapping original-image coordinates to view coordinates.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .frames import MSER, HESSAFF, DOG
from .image import downsample, gaussian_blur, scaling_map, warp_affine


@dataclass(frozen=True)
class AffineDecomposition:
    """A = lam * R(psi) * diag(tilt, 1) * R(phi), tilt >= 1."""

    lam: float
    psi: float
    tilt: float
    phi: float

    def compose(self):
        c1, s1 = math.cos(self.psi), math.sin(self.psi)
        c2, s2 = math.cos(self.phi), math.sin(self.phi)
        r1 = np.array([[c1, -s1], [s1, c1]])
        r2 = np.array([[c2, -s2], [s2, c2]])
        return self.lam * r1 @ np.diag([self.tilt, 1.0]) @ r2


def decompose_affine(a):
    """SVD factorization of a 2x2 matrix with positive determinant."""
    m = np.asarray(a, np.float64)
    if m.shape == (3, 3):
        m = m[:2, :2]
    if m.shape != (2, 2):
        raise ValueError("expected a 2x2 linear map")
    det = float(np.linalg.det(m))
    if det <= 0.0:
        raise ValueError(f"determinant must be positive, got {det}")
    u, s, vt = np.linalg.svd(m)
    if s[1] <= 0.0 or s[0] / s[1] > 1e12:
        raise ValueError("near-singular linear map")
    if np.linalg.det(u) < 0.0:
        # det(u)*det(v) > 0 here, so flip the last column of both factors
        u = u * np.array([1.0, -1.0])
        vt = vt * np.array([[1.0], [-1.0]])
    lam = float(s[1])
    tilt = float(s[0] / s[1])
    psi = math.atan2(u[1, 0], u[0, 0]) % (2.0 * math.pi)
    phi = math.atan2(vt[1, 0], vt[0, 0])
    # fold phi into [0, pi); R(phi+pi) = -R(phi) is absorbed by psi
    if phi < 0.0:
        phi += math.pi
        psi = (psi + math.pi) % (2.0 * math.pi)
    if phi >= math.pi:
        phi -= math.pi
        psi = (psi + math.pi) % (2.0 * math.pi)
    return AffineDecomposition(lam, psi, tilt, phi)


def homography_jacobian(h, x, y):
    """First-order linearization of the projective map at (x, y)."""
    m = np.asarray(h, np.float64)
    den = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(den) < 1e-12:
        raise ValueError("point maps to infinity")
    nx = m[0, 0] * x + m[0, 1] * y + m[0, 2]
    ny = m[1, 0] * x + m[1, 1] * y + m[1, 2]
    j = np.empty((2, 2))
    j[0, 0] = (m[0, 0] * den - nx * m[2, 0]) / (den * den)
    j[0, 1] = (m[0, 1] * den - nx * m[2, 1]) / (den * den)
    j[1, 0] = (m[1, 0] * den - ny * m[2, 0]) / (den * den)
    j[1, 1] = (m[1, 1] * den - ny * m[2, 1]) / (den * den)
    return j


def transition_tilt(h, center):
    """Tilt of the homography linearized at ``center`` of the first image."""
    j = homography_jacobian(h, float(center[0]), float(center[1]))
    return decompose_affine(j).tilt


def latitude_to_tilt(theta_deg):
    """t = 1 / cos(latitude), latitude in [0, 90) degrees."""
    if not 0.0 <= theta_deg < 90.0:
        raise ValueError(f"latitude must be in [0, 90), got {theta_deg}")
    return 1.0 / math.cos(math.radians(theta_deg))


@dataclass(frozen=True)
class ViewSpec:
    """One synthesized view: scale S, tilt t, longitude phi (degrees)."""

    scale: float
    tilt: float
    phi: float
    view_id: int = -1

    @property
    def key(self):
        return (round(self.scale, 9), round(self.tilt, 9), round(self.phi, 9))

    def is_identity(self):
        return self.scale == 1.0 and self.tilt == 1.0 and self.phi == 0.0


@dataclass(frozen=True)
class SynthesisConfig:
    """View sampling sets for one detector run."""

    scales: tuple = (1.0,)
    tilts: tuple = (1.0,)
    delta_phi_base: float = 360.0
    sigma_base: float = 0.8

    def __post_init__(self):
        if any(s <= 0.0 or s > 1.0 for s in self.scales):
            raise ValueError("scales must lie in (0, 1]")
        if any(t < 1.0 for t in self.tilts):
            raise ValueError("tilts must be >= 1")
        if not 0.0 < self.delta_phi_base <= 360.0:
            raise ValueError("delta_phi_base must lie in (0, 360]")


def enumerate_views(cfg):
    """Deterministic, duplicate-free view list: S desc, t asc, phi asc.

    tilt 1 contributes the single phi=0 view; otherwise longitudes step by
    delta_phi_base/t and stop below 180 degrees (a view and its 180-degree
    twin differ by an in-plane rotation the descriptors absorb).
    """
    out = []
    seen = set()
    for s in sorted(set(cfg.scales), reverse=True):
        for t in sorted(set(cfg.tilts)):
            if t == 1.0:
                phis = [0.0]
            else:
                step = cfg.delta_phi_base / t
                phis = []
                k = 0
                while k * step < 180.0:
                    phis.append(k * step)
                    k += 1
            for phi in phis:
                v = ViewSpec(float(s), float(t), float(phi), view_id=len(out))
                if v.key in seen:
                    continue
                seen.add(v.key)
                out.append(v)
    return out


def rotation_canvas_map(phi_deg, w, h):
    """Rotation into the tight bounding box of the rotated image domain."""
    a = math.radians(phi_deg)
    c, s = math.cos(a), math.sin(a)
    rot = np.array([[c, -s], [s, c]])
    corners = np.array([[-0.5, -0.5], [w - 0.5, -0.5],
                        [-0.5, h - 0.5], [w - 0.5, h - 0.5]])
    rc = corners @ rot.T
    mins = rc.min(axis=0)
    maxs = rc.max(axis=0)
    out_w = max(1, int(round(maxs[0] - mins[0])))
    out_h = max(1, int(round(maxs[1] - mins[1])))
    m = np.eye(3)
    m[:2, :2] = rot
    m[0, 2] = -mins[0] - 0.5
    m[1, 2] = -mins[1] - 0.5
    return m, out_w, out_h


def view_geometry(v, w, h):
    """Realized frame_map (original -> view) and view canvas size."""
    m = np.eye(3)
    cw, ch = w, h
    if v.scale != 1.0:
        ms, cw, ch = scaling_map(v.scale, v.scale, w, h)
        m = ms @ m
    if v.phi != 0.0:
        mr, cw, ch = rotation_canvas_map(v.phi, cw, ch)
        m = mr @ m
    if v.tilt != 1.0:
        mt, cw, ch = scaling_map(1.0 / v.tilt, 1.0, cw, ch)
        m = mt @ m
    return m, cw, ch


def synthesize_view(img, v, sigma_base):
    """Render one view; returns (view image, frame_map)."""
    img = np.asarray(img, np.float64)
    h, w = img.shape
    frame_map, _, _ = view_geometry(v, w, h)

    work = downsample(img, v.scale, sigma_base) if v.scale != 1.0 else img
    if v.phi != 0.0:
        mr, cw, ch = rotation_canvas_map(v.phi, work.shape[1], work.shape[0])
        work = warp_affine(work, mr, cw, ch)
    if sigma_base > 0.0:
        work = gaussian_blur(work, v.tilt * sigma_base, sigma_base)
    if v.tilt != 1.0:
        mt, cw, ch = scaling_map(1.0 / v.tilt, 1.0, work.shape[1], work.shape[0])
        work = warp_affine(work, mt, cw, ch)
    return work, frame_map


def backproject_frame(f, frame_map, view_id=None):
    """Map a frame detected in view coordinates back to the original image."""
    m = np.asarray(frame_map, np.float64)
    lin = m[:2, :2]
    det = float(np.linalg.det(lin))
    if abs(det) < 1e-12:
        raise ValueError("singular frame map")
    inv = np.linalg.inv(m)
    cx = inv[0, 0] * f.x + inv[0, 1] * f.y + inv[0, 2]
    cy = inv[1, 0] * f.x + inv[1, 1] * f.y + inv[1, 2]
    new_shape = inv[:2, :2] @ f.shape
    out = f.with_shape(new_shape, x=float(cx), y=float(cy))
    if view_id is not None:
        out = replace(out, view_id=view_id)
    return out


# ---------------------------------------------------------------------------
# named presets
# ---------------------------------------------------------------------------

SQRT2 = math.sqrt(2.0)

SIGMA_BASE = {MSER: 0.8, HESSAFF: 0.2, DOG: 0.4}

_SCALE_SET = (1.0, 0.25, 0.125)
_TILT_7 = (1.0, SQRT2, 2.0, 2.0 * SQRT2, 4.0, 4.0 * SQRT2, 8.0)
_TILT_5 = (1.0, 2.0, 4.0, 6.0, 8.0)

PRESETS = {
    "mser-sparse": (MSER, SynthesisConfig(_SCALE_SET, (1.0, 5.0, 9.0), 360.0, 0.8)),
    "mser-dense": (MSER, SynthesisConfig(_SCALE_SET, _TILT_5, 72.0, 0.8)),
    "hessaff-sparse": (HESSAFF, SynthesisConfig((1.0,), _TILT_7, 360.0, 0.2)),
    "hessaff-dense": (HESSAFF, SynthesisConfig((1.0,), _TILT_5, 72.0, 0.2)),
    "dog-sparse": (DOG, SynthesisConfig((1.0,), _TILT_5, 120.0, 0.4)),
    "dog-dense": (DOG, SynthesisConfig((1.0,), _TILT_7, 72.0, 0.4)),
    "mods-step1": (MSER, SynthesisConfig(_SCALE_SET, (1.0,), 360.0, 0.8)),
    "mods-step2": (MSER, SynthesisConfig(_SCALE_SET, (1.0, 5.0, 9.0), 360.0, 0.8)),
    "mods-step3": (HESSAFF, SynthesisConfig((1.0,), _TILT_7, 360.0, 0.2)),
    "mods-step4": (HESSAFF, SynthesisConfig((1.0,), _TILT_5, 72.0, 0.2)),
}


def get_preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; see `presets` for choices") from None
