"""Synthetic-pair generation and the tilt/scale parameter sweeps."""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .image import downsample, load_image, scaling_map
from .matcher import FIRST_GEOM_INCONSISTENT
from .pipeline import match_single
from .synthesis import ViewSpec, latitude_to_tilt, synthesize_view
from .verify import score_against_ground_truth

DEFAULT_LATITUDES = (0.0, 20.0, 40.0, 60.0, 65.0, 70.0, 75.0, 80.0, 85.0)
DEFAULT_QUANTILE = 0.04
GT_SIGMA_BASE = 0.8
CORRECT_TOL = 3.0


def robust_quantile(values, q):
    """Nearest-rank quantile: element ceil(q*n)-1 of the sorted list."""
    vals = sorted(values)
    if not vals:
        raise ValueError("empty value list")
    if not 0.0 < q < 1.0:
        raise ValueError("quantile must lie in (0, 1)")
    return vals[max(0, math.ceil(q * len(vals)) - 1)]


def gen_synthetic_pair(img, theta_deg, seed=0):
    """Tilted view of an image plus the exact affine that produced it.

    The warp runs the standard synthesis pipeline at t = 1/cos(theta),
    phi = 0 with pre-smoothing 0.8; the returned 3x3 map is the affine the
    pipeline realized (original -> warped).
    """
    img = np.asarray(img, np.float64)
    t = latitude_to_tilt(theta_deg)
    view = ViewSpec(1.0, t, 0.0, view_id=0)
    warped, h_gt = synthesize_view(img, view, GT_SIGMA_BASE)
    return warped, h_gt


def gen_scaled_pair(img, lam, sigma_base=GT_SIGMA_BASE):
    """Downsampled-by-lambda view plus its exact scaling map."""
    if lam < 1.0:
        raise ValueError("scale factor must be >= 1")
    img = np.asarray(img, np.float64)
    h, w = img.shape
    if lam == 1.0:
        from .image import gaussian_blur
        out = gaussian_blur(img, sigma_base, sigma_base)
        return out, np.eye(3)
    out = downsample(img, 1.0 / lam, sigma_base)
    m, _, _ = scaling_map(1.0 / lam, 1.0 / lam, w, h)
    return out, m


@dataclass(frozen=True)
class SweepSpec:
    configs: tuple                      # (name, detector, SynthesisConfig)
    latitudes: tuple = DEFAULT_LATITUDES
    scale_factors: tuple = ()
    n_images: int = 10
    quantile: float = DEFAULT_QUANTILE
    seed: int = 0
    strategy: str = FIRST_GEOM_INCONSISTENT

    def __post_init__(self):
        if any(not 0.0 <= t < 90.0 for t in self.latitudes):
            raise ValueError("latitudes must lie in [0, 90)")
        if any(l < 1.0 for l in self.scale_factors):
            raise ValueError("scale factors must be >= 1")
        if not 0.0 < self.quantile < 1.0:
            raise ValueError("quantile must lie in (0, 1)")


@dataclass
class SweepCell:
    config: str
    parameter: float          # latitude (deg) or scale factor
    n: int
    robust_min_correct: int
    mean_efficiency: float
    mean_correct: float
    mean_tentatives: float
    time_ms: float


@dataclass
class SweepReport:
    kind: str                 # "tilt" or "scale"
    cells: list = field(default_factory=list)


def list_images(image_dir, n_images, seed):
    exts = {".png", ".jpg", ".jpeg", ".pgm"}
    paths = sorted(p for p in Path(image_dir).iterdir()
                   if p.suffix.lower() in exts)
    if not paths:
        raise FileNotFoundError(f"no images in {image_dir}")
    if len(paths) > n_images:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(paths), size=n_images, replace=False)
        paths = [paths[i] for i in sorted(pick)]
    return paths


def _sweep(spec, image_dir, kind, make_pair, parameters):
    import time

    paths = list_images(image_dir, spec.n_images, spec.seed)
    images = [load_image(p) for p in paths]
    report = SweepReport(kind=kind)
    for name, detector, config in spec.configs:
        for param in parameters:
            correct, eff, tents = [], [], []
            t0 = time.perf_counter()
            for img in images:
                warped, h_gt = make_pair(img, param)
                res = match_single(img, warped, detector, config,
                                   seed=spec.seed,
                                   strategy_kind=spec.strategy)
                score = score_against_ground_truth(
                    res.geometry, res.correspondences, h_gt, tol=CORRECT_TOL)
                correct.append(score["correct_matches"])
                regions = 0.5 * (res.regions1 + res.regions2)
                eff.append(score["correct_matches"] / regions if regions else 0.0)
                tents.append(score["tentatives"])
            dt = (time.perf_counter() - t0) * 1000.0
            report.cells.append(SweepCell(
                config=name, parameter=float(param), n=len(images),
                robust_min_correct=int(robust_quantile(correct, spec.quantile)),
                mean_efficiency=float(np.mean(eff)),
                mean_correct=float(np.mean(correct)),
                mean_tentatives=float(np.mean(tents)),
                time_ms=dt))
    return report


def run_tilt_sweep(spec, image_dir):
    """Match each image against its synthetic tilted views."""
    def make_pair(img, theta):
        return gen_synthetic_pair(img, theta, seed=spec.seed)

    return _sweep(spec, image_dir, "tilt", make_pair, spec.latitudes)


def run_scale_sweep(spec, image_dir):
    """Match each image against its downsampled views."""
    factors = spec.scale_factors or tuple(range(1, 10))

    def make_pair(img, lam):
        return gen_scaled_pair(img, lam)

    return _sweep(spec, image_dir, "scale", make_pair, factors)


SWEEP_CSV_HEADER = ("kind,config,parameter,n,robust_min_correct,"
                    "mean_efficiency,mean_correct,mean_tentatives,time_ms")


def report_to_csv(report, include_timing=True):
    lines = [SWEEP_CSV_HEADER]
    for c in report.cells:
        t = repr(c.time_ms) if include_timing else ""
        lines.append(f"{report.kind},{c.config},{c.parameter!r},{c.n},"
                     f"{c.robust_min_correct},{c.mean_efficiency!r},"
                     f"{c.mean_correct!r},{c.mean_tentatives!r},{t}")
    return "\n".join(lines) + "\n"


def report_from_csv(text):
    lines = [l for l in text.strip().splitlines() if l]
    if not lines or lines[0] != SWEEP_CSV_HEADER:
        raise ValueError("not a sweep report CSV")
    report = None
    for line in lines[1:]:
        parts = line.split(",")
        kind = parts[0]
        if report is None:
            report = SweepReport(kind=kind)
        report.cells.append(SweepCell(
            config=parts[1], parameter=float(parts[2]), n=int(parts[3]),
            robust_min_correct=int(parts[4]), mean_efficiency=float(parts[5]),
            mean_correct=float(parts[6]), mean_tentatives=float(parts[7]),
            time_ms=float(parts[8]) if parts[8] else 0.0))
    return report
