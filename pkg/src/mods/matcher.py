"""Descriptor search and tentative correspondence selection.

Two acceptance rules are provided: the classic nearest/second-nearest
distance ratio, and the nearest/first-geometrically-inconsistent ratio
where the denominator is the closest neighbor whose region center lies at
least ``inconsistency_radius`` pixels away from the nearest match -- so
re-detections of the same region cannot veto each other.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels as K

SECOND_NEAREST = "second-nearest"
FIRST_GEOM_INCONSISTENT = "first-inconsistent"

# per-detector ratio thresholds for the first-inconsistent rule
RATIO_THRESHOLDS = {"mser": 0.85, "dog": 0.85, "hessaff": 0.80}
SECOND_NEAREST_THRESHOLD = 0.8
INCONSISTENCY_RADIUS = 10.0


@dataclass(frozen=True)
class MatchStrategy:
    kind: str = FIRST_GEOM_INCONSISTENT
    threshold: float = 0.8
    inconsistency_radius: float = INCONSISTENCY_RADIUS

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.inconsistency_radius <= 0.0:
            raise ValueError("inconsistency radius must be positive")


def strategy_for(detector, kind=FIRST_GEOM_INCONSISTENT):
    thr = RATIO_THRESHOLDS.get(detector, 0.8)
    if kind == SECOND_NEAREST:
        thr = SECOND_NEAREST_THRESHOLD
    return MatchStrategy(kind=kind, threshold=thr)


@dataclass
class TentativeCorrespondence:
    frame1: object
    frame2: object
    ratio: float
    duplicate_count: int = 1


class NNIndex:
    """k-NN over descriptor rows: exact scan for small sets, a randomized
    kd-forest above ``exact_threshold``.  ``checks`` bounds the number of
    leaf buckets visited per query (FLANN semantics)."""

    def __init__(self, descs, exact_threshold=2000, trees=4, checks=128,
                 leaf_size=16, seed=0):
        descs = np.ascontiguousarray(descs, np.float64)
        if descs.ndim != 2 or descs.shape[0] == 0:
            raise ValueError("index needs a non-empty 2-D descriptor array")
        self.data = descs
        self.checks = checks
        self.exact = descs.shape[0] < exact_threshold
        if not self.exact:
            self._build_forest(trees, leaf_size, np.random.default_rng(seed))

    def _build_forest(self, trees, leaf_size, rng):
        dim_var_top = 8
        n, dim = self.data.shape
        nd, nv, nl, nr = [], [], [], []
        nstart, ncount = [], []
        leaf_pts = []
        roots = []

        def build(idx):
            node = len(nd)
            nd.append(-1)
            nv.append(0.0)
            nl.append(-1)
            nr.append(-1)
            nstart.append(-1)
            ncount.append(-1)
            if idx.size <= leaf_size:
                nstart[node] = len(leaf_pts)
                ncount[node] = idx.size
                leaf_pts.extend(idx.tolist())
                return node
            sub = self.data[idx]
            var = sub.var(axis=0)
            top = np.argsort(var)[::-1][:dim_var_top]
            d = int(top[rng.integers(0, min(dim_var_top, top.size))])
            vals = sub[:, d]
            v = float(np.median(vals))
            left = idx[vals <= v]
            right = idx[vals > v]
            if left.size == 0 or right.size == 0:
                # degenerate split (duplicated values): make a leaf
                nstart[node] = len(leaf_pts)
                ncount[node] = idx.size
                leaf_pts.extend(idx.tolist())
                return node
            nd[node] = d
            nv[node] = v
            nl[node] = build(left)
            nr[node] = build(right)
            return node

        import sys
        old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old, 10000))
        try:
            for _ in range(trees):
                roots.append(build(np.arange(n)))
        finally:
            sys.setrecursionlimit(old)
        self._nodes = (np.asarray(nd, np.int64), np.asarray(nv, np.float64),
                       np.asarray(nl, np.int64), np.asarray(nr, np.int64),
                       np.asarray(nstart, np.int64), np.asarray(ncount, np.int64),
                       np.asarray(leaf_pts, np.int64), np.asarray(roots, np.int64))

    def __len__(self):
        return self.data.shape[0]

    def query(self, queries, k):
        queries = np.ascontiguousarray(np.atleast_2d(queries), np.float64)
        k = min(k, len(self))
        if self.exact:
            return K.knn_brute(queries, self.data, k)
        nd, nv, nl, nr, ns, nc, lp, roots = self._nodes
        return K.kd_search(nd, nv, nl, nr, ns, nc, lp, roots, self.data,
                           queries, k, self.checks)


def build_index(descs, **kw):
    return NNIndex(descs, **kw)


def _centers(fs):
    return np.array([[f.x, f.y] for f in fs]) if fs else np.zeros((0, 2))


def match_second_nearest(descs1, frames1, index, frames2, strategy):
    """Lowe ratio test; a single-entry index matches with ratio 0."""
    if strategy.kind != SECOND_NEAREST:
        raise ValueError("strategy kind must be second-nearest")
    if len(frames1) == 0:
        return []
    idx, dist = index.query(descs1, 2)
    out = []
    for i in range(idx.shape[0]):
        if idx.shape[1] < 2:
            ratio = 0.0
        else:
            d0, d1 = dist[i, 0], dist[i, 1]
            ratio = d0 / d1 if d1 > 0.0 else (0.0 if d0 == 0.0 else 1.0)
        if ratio <= strategy.threshold:
            out.append(TentativeCorrespondence(frames1[i], frames2[idx[i, 0]],
                                               float(ratio)))
    return out


def match_first_inconsistent(descs1, frames1, index, frames2, strategy,
                             n_neighbors=10, widened=50):
    """Nearest / first geometrically inconsistent neighbor ratio test."""
    if strategy.kind != FIRST_GEOM_INCONSISTENT:
        raise ValueError("strategy kind must be first-inconsistent")
    if len(frames1) == 0:
        return []
    c2 = _centers(frames2)
    r2 = strategy.inconsistency_radius ** 2

    def denominator(row_idx, row_dist):
        nn = row_idx[0]
        for j in range(1, row_idx.size):
            dx = c2[row_idx[j], 0] - c2[nn, 0]
            dy = c2[row_idx[j], 1] - c2[nn, 1]
            if dx * dx + dy * dy >= r2:
                return row_dist[j]
        return -1.0

    idx, dist = index.query(descs1, min(n_neighbors, len(index)))
    out = []
    need_wide = []
    for i in range(idx.shape[0]):
        den = denominator(idx[i], dist[i])
        if den < 0.0 and len(index) > idx.shape[1]:
            need_wide.append(i)
            continue
        _emit(out, frames1, frames2, idx[i, 0], dist[i, 0], den, strategy, i)
    if need_wide:
        rows = np.asarray(need_wide)
        idx_w, dist_w = index.query(np.asarray(descs1)[rows],
                                    min(widened, len(index)))
        for r, i in enumerate(rows):
            den = denominator(idx_w[r], dist_w[r])
            _emit(out, frames1, frames2, idx_w[r, 0], dist_w[r, 0], den,
                  strategy, i)
    return out


def _emit(out, frames1, frames2, nn, d0, den, strategy, i):
    if den < 0.0:
        ratio = 0.0  # nothing inconsistent anywhere: denominator +inf
    elif den == 0.0:
        ratio = 0.0 if d0 == 0.0 else 1.0
    else:
        ratio = d0 / den
    if ratio <= strategy.threshold:
        out.append(TentativeCorrespondence(frames1[i], frames2[nn], float(ratio)))


def match(descs1, frames1, index, frames2, strategy):
    if strategy.kind == SECOND_NEAREST:
        return match_second_nearest(descs1, frames1, index, frames2, strategy)
    return match_first_inconsistent(descs1, frames1, index, frames2, strategy)


def filter_duplicates(tcs, radius=4.0):
    """Merge correspondences that re-detect the same region pair.

    A correspondence joins the first kept representative whose centers are
    within ``radius`` in both images; the representative is the one with
    the lowest ratio.  Deterministic order: (ratio, coordinates).
    """
    if not tcs:
        return []
    ordered = sorted(tcs, key=lambda t: (t.ratio, t.frame1.x, t.frame1.y,
                                         t.frame2.x, t.frame2.y))
    r2 = radius * radius
    kept = []
    k1 = np.zeros((len(ordered), 2))
    k2 = np.zeros((len(ordered), 2))
    for t in ordered:
        if kept:
            n = len(kept)
            d1 = (k1[:n, 0] - t.frame1.x) ** 2 + (k1[:n, 1] - t.frame1.y) ** 2
            d2 = (k2[:n, 0] - t.frame2.x) ** 2 + (k2[:n, 1] - t.frame2.y) ** 2
            close = np.nonzero((d1 <= r2) & (d2 <= r2))[0]
            if close.size:
                kept[close[0]].duplicate_count += t.duplicate_count
                continue
        n = len(kept)
        k1[n] = (t.frame1.x, t.frame1.y)
        k2[n] = (t.frame2.x, t.frame2.y)
        kept.append(replace(t))
    return kept
