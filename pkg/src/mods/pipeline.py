"""Staged two-view matching: run progressively more expensive detector and
view-synthesis configurations until the geometry is supported by enough
inliers.

Features accumulate across stages; each stage synthesizes only views not
yet rendered for its detector, matches within detector families over
everything accumulated so far, and verifies the pooled correspondences.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import descriptor as desc_mod
from .detectors import DEFAULT_PARAMS, detect
from .frames import DETECTORS
from .matcher import (FIRST_GEOM_INCONSISTENT, MatchStrategy, build_index,
                      filter_duplicates, match, strategy_for)
from .synthesis import (PRESETS, backproject_frame, enumerate_views,
                        synthesize_view)
from .verify import HOMOGRAPHY, MIN_SAMPLES, estimate_lo_ransac

PHASES = ("synthesis", "detection", "description", "matching", "ransac")

DEFAULT_THETA_M = 15

# smallest view a detector accepts; undersized views contribute nothing
MIN_IMAGE_SIDE = {"mser": 16, "hessaff": 32, "dog": 32}


@dataclass(frozen=True)
class ModsStage:
    detector: str
    config: object
    label: str


@dataclass
class ModsResult:
    geometry: object
    correspondences: list
    stage_reached: int
    per_stage_timing: list
    n_matches: int
    regions1: int = 0
    regions2: int = 0
    views1: int = 0
    views2: int = 0
    stage_labels: list = field(default_factory=list)

    def phase_totals(self):
        out = {p: 0.0 for p in PHASES}
        for rec in self.per_stage_timing:
            for p in PHASES:
                out[p] += rec[p]
        return out


def default_stages():
    return [ModsStage(*PRESETS[name], label=name)
            for name in ("mods-step1", "mods-step2", "mods-step3", "mods-step4")]


def stage_from_preset(name):
    det, cfg = PRESETS[name]
    return ModsStage(det, cfg, label=name)


def worker_count():
    env = os.environ.get("MODS_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _frame_survives_backprojection(f, inv_map, w, h, patch_size, magnification):
    """Reject frames whose descriptor support touches synthesized fill.

    The patch corners (view coordinates) must pull back inside the
    original image domain.
    """
    pts = desc_mod._sampling_corners(f, patch_size, magnification)
    ones = np.ones((4, 1))
    back = (inv_map @ np.hstack([pts, ones]).T).T
    return bool(np.all((back[:, 0] >= 0.0) & (back[:, 0] <= w - 1.0)
                       & (back[:, 1] >= 0.0) & (back[:, 1] <= h - 1.0)))


def _process_view(img, view, detector, sigma_base, params, patch_size,
                  magnification, root):
    """Synthesize one view, detect, describe, backproject.

    Returns (frames in original coordinates, descriptor rows, timing).
    """
    h, w = img.shape
    t0 = time.perf_counter()
    if view.is_identity() and sigma_base == 0.0:
        vimg, fmap = img, np.eye(3)
    else:
        vimg, fmap = synthesize_view(img, view, sigma_base)
    t1 = time.perf_counter()
    if min(vimg.shape) < MIN_IMAGE_SIDE[detector]:
        fs = []
    else:
        fs = detect(detector, vimg, params)
    t2 = time.perf_counter()
    inv_map = np.linalg.inv(fmap)
    if not view.is_identity():
        fs = [f for f in fs
              if _frame_survives_backprojection(f, inv_map, w, h,
                                                patch_size, magnification)]
    described, descs = desc_mod.describe_frames(vimg, fs, patch_size,
                                                magnification, root=root)
    t3 = time.perf_counter()
    out = [backproject_frame(f, fmap, view_id=view.view_id) for f in described]
    t4 = time.perf_counter()
    timing = {"synthesis": t1 - t0, "detection": t2 - t1,
              "description": t3 - t2, "backprojection": t4 - t3}
    return out, descs, timing


def extract_features(img, detector, config, params=None, threads=None,
                     patch_size=desc_mod.PATCH_SIZE,
                     magnification=desc_mod.MAGNIFICATION, root=True,
                     skip_keys=(), timing=None):
    """All (frame, descriptor) pairs for one detector + view configuration."""
    params = params if params is not None else DEFAULT_PARAMS[detector]
    views = [v for v in enumerate_views(config) if v.key not in set(skip_keys)]
    threads = threads or worker_count()

    def work(v):
        return _process_view(img, v, detector, config.sigma_base, params,
                             patch_size, magnification, root)

    if threads > 1 and len(views) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, views))
    else:
        results = [work(v) for v in views]

    frames = []
    chunks = []
    for fs, ds, t in results:
        frames.extend(fs)
        if ds.shape[0]:
            chunks.append(ds)
        if timing is not None:
            timing["synthesis"] += t["synthesis"]
            timing["detection"] += t["detection"]
            timing["description"] += t["description"] + t["backprojection"]
    descs = np.vstack(chunks) if chunks else np.zeros((0, 128))
    return frames, descs, [v.key for v in views]


class _Accumulator:
    """Per-image feature store grown stage by stage."""

    def __init__(self):
        self.frames = {d: [] for d in DETECTORS}
        self.descs = {d: np.zeros((0, 128)) for d in DETECTORS}
        self.seen = {d: set() for d in DETECTORS}
        self.n_views = 0

    def add(self, detector, frames, descs, keys):
        self.frames[detector].extend(frames)
        if descs.shape[0]:
            self.descs[detector] = np.vstack([self.descs[detector], descs])
        self.seen[detector].update(keys)
        self.n_views += len(keys)

    def total(self):
        return sum(len(v) for v in self.frames.values())


def run_mods(img1, img2, stages=None, theta_m=DEFAULT_THETA_M, s_max=None,
             model=HOMOGRAPHY, seed=0, ransac_threshold=2.0,
             strategy_kind=FIRST_GEOM_INCONSISTENT, ratio_threshold=None,
             detector_params=None, duplicate_radius=4.0, root=True,
             threads=None):
    """Iterate stages until the verified inlier count reaches theta_m.

    Returns a ModsResult; absent geometry (None) is a valid outcome when
    every stage is exhausted without support.
    """
    stages = stages if stages is not None else default_stages()
    if not stages:
        raise ValueError("need at least one stage")
    if theta_m < MIN_SAMPLES[model]:
        raise ValueError(f"theta_m must be >= {MIN_SAMPLES[model]} for {model}")
    s_max = len(stages) if s_max is None else min(s_max, len(stages))
    img1 = np.ascontiguousarray(img1, np.float64)
    img2 = np.ascontiguousarray(img2, np.float64)

    acc = (_Accumulator(), _Accumulator())
    per_stage = []
    labels = []
    geometry = None
    correspondences = []
    stage_reached = 0

    for k, stage in enumerate(stages[:s_max]):
        timing = {p: 0.0 for p in PHASES}
        params = (detector_params or {}).get(stage.detector,
                                             DEFAULT_PARAMS[stage.detector])
        for side, img in ((0, img1), (1, img2)):
            a = acc[side]
            fs, ds, keys = extract_features(
                img, stage.detector, stage.config, params=params,
                threads=threads, root=root,
                skip_keys=a.seen[stage.detector], timing=timing)
            a.add(stage.detector, fs, ds, keys)

        t0 = time.perf_counter()
        tcs = []
        for det in DETECTORS:
            f1, d1 = acc[0].frames[det], acc[0].descs[det]
            f2, d2 = acc[1].frames[det], acc[1].descs[det]
            if not f1 or not f2:
                continue
            index = build_index(d2)
            strat = strategy_for(det, strategy_kind)
            if ratio_threshold is not None:
                strat = MatchStrategy(strat.kind, ratio_threshold,
                                      strat.inconsistency_radius)
            tcs.extend(match(d1, f1, index, f2, strat))
        tcs = filter_duplicates(tcs, duplicate_radius)
        timing["matching"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        stage_geom = None
        if len(tcs) >= MIN_SAMPLES[model]:
            try:
                stage_geom = estimate_lo_ransac(tcs, model=model,
                                                threshold=ransac_threshold,
                                                seed=seed)
            except ValueError:
                stage_geom = None
        timing["ransac"] = time.perf_counter() - t0

        per_stage.append(timing)
        labels.append(stage.label)
        stage_reached = k + 1
        correspondences = tcs
        geometry = stage_geom
        if stage_geom is not None and stage_geom.n_inliers >= theta_m:
            break

    return ModsResult(
        geometry=geometry, correspondences=correspondences,
        stage_reached=stage_reached, per_stage_timing=per_stage,
        n_matches=geometry.n_inliers if geometry is not None else 0,
        regions1=acc[0].total(), regions2=acc[1].total(),
        views1=acc[0].n_views, views2=acc[1].n_views,
        stage_labels=labels)


def match_single(img1, img2, detector, config, model=HOMOGRAPHY, seed=0,
                 ransac_threshold=2.0, strategy_kind=FIRST_GEOM_INCONSISTENT,
                 ratio_threshold=None, detector_params=None, root=True,
                 threads=None, label="single"):
    """One-shot matching with a single detector + synthesis configuration."""
    stage = ModsStage(detector, config, label)
    return run_mods(img1, img2, [stage], theta_m=MIN_SAMPLES[model],
                    model=model, seed=seed, ransac_threshold=ransac_threshold,
                    strategy_kind=strategy_kind, ratio_threshold=ratio_threshold,
                    detector_params=detector_params, root=root, threads=threads)
