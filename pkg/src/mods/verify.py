"""Robust two-view geometry estimation and ground-truth scoring.

LO-RANSAC: adaptive-iteration hypothesize-and-verify with a local
optimization step (iterated least squares over the inliers with a
shrinking threshold) every time a better model is found.
"""

import math
from dataclasses import dataclass

import numpy as np

HOMOGRAPHY = "homography"
FUNDAMENTAL = "fundamental"

MIN_SAMPLES = {HOMOGRAPHY: 4, FUNDAMENTAL: 7}
LO_THRESHOLD_STEPS = (2.0, 1.5, 1.0)
MAX_ITERATIONS = 10000


@dataclass
class TwoViewGeometry:
    model: str
    M: np.ndarray
    inlier_mask: np.ndarray
    iterations_run: int
    seed: int

    @property
    def n_inliers(self):
        return int(self.inlier_mask.sum())


def _normalize_points(pts):
    """Hartley normalization: zero centroid, mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = math.sqrt(2.0) / d if d > 1e-12 else 1.0
    t = np.array([[s, 0.0, -s * c[0]],
                  [0.0, s, -s * c[1]],
                  [0.0, 0.0, 1.0]])
    return (pts - c) * s, t


def homography_from_points(x1, x2):
    """Normalized DLT from >= 4 correspondences; None when degenerate."""
    x1 = np.asarray(x1, np.float64)
    x2 = np.asarray(x2, np.float64)
    if x1.shape[0] < 4:
        raise ValueError("homography needs at least 4 correspondences")
    p1, t1 = _normalize_points(x1)
    p2, t2 = _normalize_points(x2)
    n = p1.shape[0]
    a = np.zeros((2 * n, 9))
    a[0::2, 0] = p1[:, 0]
    a[0::2, 1] = p1[:, 1]
    a[0::2, 2] = 1.0
    a[0::2, 6] = -p2[:, 0] * p1[:, 0]
    a[0::2, 7] = -p2[:, 0] * p1[:, 1]
    a[0::2, 8] = -p2[:, 0]
    a[1::2, 3] = p1[:, 0]
    a[1::2, 4] = p1[:, 1]
    a[1::2, 5] = 1.0
    a[1::2, 6] = -p2[:, 1] * p1[:, 0]
    a[1::2, 7] = -p2[:, 1] * p1[:, 1]
    a[1::2, 8] = -p2[:, 1]
    try:
        _, s, vt = np.linalg.svd(a)
    except np.linalg.LinAlgError:
        return None
    h = vt[-1].reshape(3, 3)
    m = np.linalg.inv(t2) @ h @ t1
    if abs(np.linalg.det(m)) < 1e-12 or not np.isfinite(m).all():
        return None
    return m


def normalize_homography(m):
    """Scale so the largest-magnitude entry is exactly 1."""
    flat = np.abs(m).ravel()
    return m / m.ravel()[int(np.argmax(flat))]


def fundamental_from_7(x1, x2):
    """Seven-point algorithm: up to 3 rank-2 candidates."""
    a = _epipolar_design(x1, x2)
    _, s, vt = np.linalg.svd(a)
    f1 = vt[-1].reshape(3, 3)
    f2 = vt[-2].reshape(3, 3)
    # det(alpha*f1 + (1 - alpha)*f2) = 0, cubic in alpha
    def det_at(t):
        return np.linalg.det(t * f1 + (1.0 - t) * f2)

    c0 = det_at(0.0)
    c_coef = np.polyfit([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
                        [c0, det_at(1.0 / 3.0), det_at(2.0 / 3.0), det_at(1.0)], 3)
    roots = np.roots(c_coef)
    out = []
    for r in roots:
        if abs(r.imag) > 1e-8:
            continue
        f = r.real * f1 + (1.0 - r.real) * f2
        nrm = np.linalg.norm(f)
        if nrm < 1e-12:
            continue
        out.append(f / nrm)
    return out


def fundamental_from_points(x1, x2):
    """Normalized 8-point least squares with rank-2 projection."""
    x1 = np.asarray(x1, np.float64)
    x2 = np.asarray(x2, np.float64)
    if x1.shape[0] < 8:
        x1 = np.asarray(x1)
        if x1.shape[0] == 7:
            cands = fundamental_from_7(x1, x2)
            return cands[0] if cands else None
        raise ValueError("fundamental needs at least 7 correspondences")
    p1, t1 = _normalize_points(x1)
    p2, t2 = _normalize_points(x2)
    a = _epipolar_design(p1, p2)
    _, s, vt = np.linalg.svd(a)
    f = vt[-1].reshape(3, 3)
    f = t2.T @ f @ t1
    return project_rank2(f)


def project_rank2(f):
    u, s, vt = np.linalg.svd(f)
    s = s.copy()
    s[2] = 0.0
    f = (u * s) @ vt
    nrm = np.linalg.norm(f)
    return f / nrm if nrm > 0 else f


def _epipolar_design(x1, x2):
    a = np.empty((x1.shape[0], 9))
    a[:, 0] = x2[:, 0] * x1[:, 0]
    a[:, 1] = x2[:, 0] * x1[:, 1]
    a[:, 2] = x2[:, 0]
    a[:, 3] = x2[:, 1] * x1[:, 0]
    a[:, 4] = x2[:, 1] * x1[:, 1]
    a[:, 5] = x2[:, 1]
    a[:, 6] = x1[:, 0]
    a[:, 7] = x1[:, 1]
    a[:, 8] = 1.0
    return a


def _apply_h(h, pts):
    z = h[2, 0] * pts[:, 0] + h[2, 1] * pts[:, 1] + h[2, 2]
    x = (h[0, 0] * pts[:, 0] + h[0, 1] * pts[:, 1] + h[0, 2]) / z
    y = (h[1, 0] * pts[:, 0] + h[1, 1] * pts[:, 1] + h[1, 2]) / z
    return np.stack([x, y], axis=1)


def symmetric_transfer_errors(h, x1, x2):
    """Per-pair sqrt(|x2 - H x1|^2 + |x1 - H^-1 x2|^2)."""
    hinv = np.linalg.inv(h)
    f = _apply_h(h, x1) - x2
    b = _apply_h(hinv, x2) - x1
    return np.sqrt((f * f).sum(axis=1) + (b * b).sum(axis=1))


def symmetric_transfer_error(h, pair):
    """Single-pair symmetric transfer error; pair = ((x1, y1), (x2, y2))."""
    h = np.asarray(h, np.float64)
    if abs(np.linalg.det(h)) < 1e-12:
        raise ValueError("homography is singular")
    x1 = np.asarray(pair[0], np.float64)[None, :]
    x2 = np.asarray(pair[1], np.float64)[None, :]
    z1 = h[2, 0] * x1[0, 0] + h[2, 1] * x1[0, 1] + h[2, 2]
    hinv = np.linalg.inv(h)
    z2 = hinv[2, 0] * x2[0, 0] + hinv[2, 1] * x2[0, 1] + hinv[2, 2]
    if abs(z1) < 1e-12 or abs(z2) < 1e-12:
        raise ValueError("point maps to infinity")
    return float(symmetric_transfer_errors(h, x1, x2)[0])


def sampson_errors(f, x1, x2):
    """Sampson distance (pixels) for the epipolar constraint."""
    ones = np.ones((x1.shape[0], 1))
    p1 = np.hstack([x1, ones])
    p2 = np.hstack([x2, ones])
    fx1 = p1 @ f.T
    ftx2 = p2 @ f
    num = (p2 * fx1).sum(axis=1) ** 2
    den = fx1[:, 0] ** 2 + fx1[:, 1] ** 2 + ftx2[:, 0] ** 2 + ftx2[:, 1] ** 2
    den = np.maximum(den, 1e-18)
    return np.sqrt(num / den)


def _errors(model, m, x1, x2):
    if model == HOMOGRAPHY:
        return symmetric_transfer_errors(m, x1, x2)
    return sampson_errors(m, x1, x2)


def _fit(model, x1, x2):
    if model == HOMOGRAPHY:
        return homography_from_points(x1, x2)
    return fundamental_from_points(x1, x2)


def _sample_models(model, x1, x2):
    if model == HOMOGRAPHY:
        if _any_collinear(x1) or _any_collinear(x2):
            return []
        m = homography_from_points(x1, x2)
        return [m] if m is not None else []
    return fundamental_from_7(x1, x2)


def _any_collinear(pts):
    for i in range(pts.shape[0] - 2):
        for j in range(i + 1, pts.shape[0] - 1):
            for k in range(j + 1, pts.shape[0]):
                v1 = pts[j] - pts[i]
                v2 = pts[k] - pts[i]
                if abs(v1[0] * v2[1] - v1[1] * v2[0]) < 1e-6:
                    return True
    return False


def _local_optimization(model, x1, x2, mask, threshold):
    """Iterated least squares with shrinking threshold over the inliers."""
    best_m = None
    mask = mask.copy()
    for mult in LO_THRESHOLD_STEPS:
        if mask.sum() < MIN_SAMPLES[model]:
            break
        m = _fit(model, x1[mask], x2[mask])
        if m is None:
            break
        best_m = m
        mask = _errors(model, m, x1, x2) <= threshold * mult
    return best_m


def estimate_lo_ransac(tcs, model=HOMOGRAPHY, threshold=2.0, conf=0.99,
                       seed=0, max_iterations=MAX_ITERATIONS):
    """Maximal consistent set over tentative correspondences.

    ``tcs`` is a list of TentativeCorrespondence or an (n, 4) array of
    (x1, y1, x2, y2).  Deterministic for a fixed seed.
    """
    pts = as_point_array(tcs)
    n = pts.shape[0]
    m_min = MIN_SAMPLES[model]
    if n < m_min:
        raise ValueError(f"{model} needs at least {m_min} correspondences, got {n}")
    x1 = np.ascontiguousarray(pts[:, 0:2])
    x2 = np.ascontiguousarray(pts[:, 2:4])
    rng = np.random.default_rng(seed)

    best_mask = None
    best_m = None
    best_count = 0
    iters_bound = max_iterations
    it = 0
    while it < iters_bound:
        it += 1
        pick = rng.choice(n, size=m_min, replace=False)
        for m in _sample_models(model, x1[pick], x2[pick]):
            err = _errors(model, m, x1, x2)
            mask = err <= threshold
            count = int(mask.sum())
            if count <= best_count:
                continue
            best_count, best_mask, best_m = count, mask, m
            # local optimization; keep whichever model explains more
            lo = _local_optimization(model, x1, x2, mask, threshold)
            if lo is not None:
                lo_mask = _errors(model, lo, x1, x2) <= threshold
                lo_count = int(lo_mask.sum())
                if lo_count >= best_count:
                    best_count, best_mask, best_m = lo_count, lo_mask, lo
            w = best_count / n
            if w > 0.0:
                denom = math.log(max(1.0 - w ** m_min, 1e-300))
                if denom < 0.0:
                    need = math.log(max(1.0 - conf, 1e-300)) / denom
                    iters_bound = min(max_iterations, max(it, int(math.ceil(need))))
    if best_m is None or best_count < m_min:
        raise ValueError("no model with a minimal consistent sample found")

    # final polish: least squares over the winning inlier set
    if best_count >= m_min:
        m = _fit(model, x1[best_mask], x2[best_mask])
        if m is not None:
            mask = _errors(model, m, x1, x2) <= threshold
            if int(mask.sum()) >= best_count:
                best_count, best_mask, best_m = int(mask.sum()), mask, m

    if model == HOMOGRAPHY:
        best_m = normalize_homography(best_m)
    else:
        best_m = project_rank2(best_m)
        best_mask = _errors(model, best_m, x1, x2) <= threshold
    return TwoViewGeometry(model=model, M=best_m,
                           inlier_mask=np.asarray(best_mask, bool),
                           iterations_run=it, seed=seed)


def as_point_array(tcs):
    if isinstance(tcs, np.ndarray):
        return np.asarray(tcs, np.float64)
    return np.array([[t.frame1.x, t.frame1.y, t.frame2.x, t.frame2.y]
                     for t in tcs], np.float64)


def score_against_ground_truth(geom, tcs, h_gt, tol=3.0):
    """Counts of ground-truth-consistent correspondences and inliers."""
    h_gt = np.asarray(h_gt, np.float64)
    if abs(np.linalg.det(h_gt)) < 1e-12:
        raise ValueError("ground-truth homography is singular")
    pts = as_point_array(tcs)
    out = {"tentatives": int(pts.shape[0]), "correct_matches": 0,
           "inliers": 0, "correct_inliers": 0,
           "correct_pct": 0.0}
    if pts.shape[0] == 0:
        return out
    err = symmetric_transfer_errors(h_gt, pts[:, 0:2], pts[:, 2:4])
    correct = err <= tol
    out["correct_matches"] = int(correct.sum())
    out["correct_pct"] = float(100.0 * correct.mean())
    if geom is not None:
        mask = np.asarray(geom.inlier_mask, bool)
        out["inliers"] = int(mask.sum())
        out["correct_inliers"] = int((correct & mask).sum())
    return out


def save_homography(path, m):
    with open(path, "w") as fh:
        for row in np.asarray(m, np.float64):
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_homography(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split()])
    m = np.asarray(rows, np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"{path}: expected 3x3 matrix, got {m.shape}")
    return m
