import math

import numpy as np
import pytest

import mods._kernels as K
from mods.frames import circular_frame
from mods.matcher import (FIRST_GEOM_INCONSISTENT, SECOND_NEAREST,
                          MatchStrategy, NNIndex, TentativeCorrespondence,
                          build_index, filter_duplicates,
                          match_first_inconsistent, match_second_nearest,
                          strategy_for)


def unit(rng, n=128):
    v = np.abs(rng.normal(size=n))
    return v / np.linalg.norm(v)


def clustered_descriptors(rng, n, centers, spread=0.25):
    """Descriptor-like data: re-detections scatter around shared prototypes."""
    pts = centers[rng.integers(0, centers.shape[0], n)] \
        + spread * rng.normal(size=(n, 128))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


class TestIndex:
    def test_single_descriptor_self_query(self):
        rng = np.random.default_rng(0)
        d = unit(rng)
        idx = build_index(d[None, :])
        i, dist = idx.query(d[None, :], 1)
        assert i[0, 0] == 0
        assert dist[0, 0] == pytest.approx(0.0, abs=1e-6)

    def test_exact_mode_matches_bruteforce(self):
        rng = np.random.default_rng(1)
        base = rng.normal(size=(500, 128))
        q = rng.normal(size=(80, 128))
        idx = build_index(base)  # < 2000: exact
        assert idx.exact
        i1, d1 = idx.query(q, 2)
        # independent brute-force scan oracle
        for r in range(q.shape[0]):
            d = np.linalg.norm(base - q[r], axis=1)
            order = np.argsort(d, kind="stable")[:2]
            assert list(i1[r]) == list(order)
            assert np.allclose(d1[r], d[order], atol=1e-9)

    def test_approximate_recall(self):
        rng = np.random.default_rng(2)
        centers = rng.normal(size=(300, 128))
        base = clustered_descriptors(rng, 10000, centers)
        q = clustered_descriptors(rng, 400, centers)
        bi, _ = K.knn_brute(q, base, 1)
        idx = build_index(base)
        assert not idx.exact
        ki, _ = idx.query(q, 1)
        assert (bi[:, 0] == ki[:, 0]).mean() >= 0.95

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_index(np.zeros((0, 128)))


def duplicate_scenario():
    """Image 2 holds two co-located copies of the query's best match plus
    one distant dissimilar descriptor."""
    rng = np.random.default_rng(3)
    d = unit(rng)
    dup = d + rng.normal(size=128) * 0.002  # near-identical re-detection
    dup /= np.linalg.norm(dup)
    far = unit(rng)
    q = d + rng.normal(size=128) * 0.05
    q /= np.linalg.norm(q)
    descs2 = np.vstack([d, dup, far])
    frames2 = [circular_frame(100.0, 100.0, 3.0),
               circular_frame(103.0, 101.0, 3.0),
               circular_frame(400.0, 300.0, 3.0)]
    return q[None, :], [circular_frame(50.0, 60.0, 3.0)], descs2, frames2


class TestFirstInconsistent:
    def test_colocated_duplicate_does_not_suppress(self):
        q, f1, descs2, f2 = duplicate_scenario()
        idx = build_index(descs2)
        out = match_first_inconsistent(
            q, f1, idx, f2, MatchStrategy(FIRST_GEOM_INCONSISTENT, 0.8))
        assert len(out) == 1
        # denominator is the distant descriptor, not the co-located twin
        d_near = np.linalg.norm(q[0] - descs2[0])
        d_far = np.linalg.norm(q[0] - descs2[2])
        assert out[0].ratio == pytest.approx(d_near / d_far, abs=1e-9)

    def test_second_nearest_suppresses_same_instance(self):
        q, f1, descs2, f2 = duplicate_scenario()
        idx = build_index(descs2)
        out = match_second_nearest(
            q, f1, idx, f2, MatchStrategy(SECOND_NEAREST, 0.8))
        assert out == []

    def test_single_entry_index_ratio_zero(self):
        rng = np.random.default_rng(4)
        d = unit(rng)
        idx = build_index(d[None, :])
        out = match_first_inconsistent(
            d[None, :], [circular_frame(1.0, 1.0, 2.0)], idx,
            [circular_frame(9.0, 9.0, 2.0)],
            MatchStrategy(FIRST_GEOM_INCONSISTENT, 0.8))
        assert len(out) == 1
        assert out[0].ratio == 0.0

    def test_widening_path(self):
        # 30 co-located near-duplicates force the k=10 search to widen
        rng = np.random.default_rng(5)
        d = unit(rng)
        descs = [d + 1e-3 * rng.normal(size=128) for _ in range(30)]
        far = unit(rng)
        descs2 = np.vstack([v / np.linalg.norm(v) for v in descs] + [far])
        frames2 = [circular_frame(50.0 + 0.1 * i, 50.0, 2.0) for i in range(30)]
        frames2.append(circular_frame(300.0, 300.0, 2.0))
        idx = build_index(descs2)
        out = match_first_inconsistent(
            d[None, :], [circular_frame(0.0, 0.0, 2.0)], idx, frames2,
            MatchStrategy(FIRST_GEOM_INCONSISTENT, 0.8))
        assert len(out) == 1
        d_far = np.linalg.norm(d - descs2[-1])
        _, dist_near = idx.query(d[None, :], 1)
        assert out[0].ratio == pytest.approx(
            float(dist_near[0, 0]) / d_far, abs=1e-9)

    def test_superset_of_second_nearest(self):
        # with no co-located pairs, the inconsistent rule accepts at least
        # whatever the classic rule accepts at the same threshold
        rng = np.random.default_rng(6)
        descs2 = np.vstack([unit(rng) for _ in range(60)])
        frames2 = [circular_frame(20.0 * (i % 10) + 30.0,
                                  20.0 * (i // 10) + 30.0, 2.0)
                   for i in range(60)]
        q = np.vstack([unit(rng) for _ in range(40)])
        f1 = [circular_frame(float(i), float(i), 2.0) for i in range(40)]
        idx = build_index(descs2)
        sn = match_second_nearest(q, f1, idx, frames2,
                                  MatchStrategy(SECOND_NEAREST, 0.9))
        fi = match_first_inconsistent(q, f1, idx, frames2,
                                      MatchStrategy(FIRST_GEOM_INCONSISTENT, 0.9))
        sn_keys = {(t.frame1.x, t.frame2.x) for t in sn}
        fi_keys = {(t.frame1.x, t.frame2.x) for t in fi}
        assert sn_keys <= fi_keys

    def test_ratio_recompute_from_descriptors(self):
        rng = np.random.default_rng(7)
        descs2 = np.vstack([unit(rng) for _ in range(50)])
        frames2 = [circular_frame(rng.uniform(0, 500), rng.uniform(0, 500), 2.0)
                   for _ in range(50)]
        q = descs2[:20] + 0.05 * rng.normal(size=(20, 128))
        f1 = [circular_frame(float(i), 0.0, 2.0) for i in range(20)]
        idx = build_index(descs2)
        strat = MatchStrategy(FIRST_GEOM_INCONSISTENT, 0.95)
        out = match_first_inconsistent(q, f1, idx, frames2, strat)
        for t in out:
            qi = int(t.frame1.x)
            d_all = np.linalg.norm(descs2 - q[qi], axis=1)
            order = np.argsort(d_all, kind="stable")
            nn = order[0]
            den = None
            for j in order[1:]:
                dx = frames2[j].x - frames2[nn].x
                dy = frames2[j].y - frames2[nn].y
                if dx * dx + dy * dy >= strat.inconsistency_radius ** 2:
                    den = d_all[j]
                    break
            assert den is not None
            assert t.ratio == pytest.approx(d_all[nn] / den, abs=1e-6)


class TestSecondNearest:
    def test_orthogonal_one_hots(self):
        d1 = np.zeros(128)
        d1[0] = 1.0
        d2 = np.zeros(128)
        d2[1] = 1.0
        idx = build_index(np.vstack([d1, d2]))
        f2 = [circular_frame(10.0, 10.0, 2.0), circular_frame(90.0, 90.0, 2.0)]
        out = match_second_nearest(d1[None, :], [circular_frame(0, 0, 2.0)],
                                   idx, f2, MatchStrategy(SECOND_NEAREST, 0.8))
        assert len(out) == 1
        assert out[0].ratio == 0.0

    def test_equidistant_suppressed(self):
        d1 = np.zeros(128)
        d1[0] = 1.0
        d2 = np.zeros(128)
        d2[1] = 1.0
        q = (d1 + d2)[None, :] / math.sqrt(2.0)
        idx = build_index(np.vstack([d1, d2]))
        f2 = [circular_frame(10.0, 10.0, 2.0), circular_frame(90.0, 90.0, 2.0)]
        out = match_second_nearest(q, [circular_frame(0, 0, 2.0)], idx, f2,
                                   MatchStrategy(SECOND_NEAREST, 0.8))
        assert out == []

    def test_matches_bruteforce_reimplementation(self):
        rng = np.random.default_rng(8)
        descs2 = np.vstack([unit(rng) for _ in range(200)])
        frames2 = [circular_frame(float(i), 0.0, 2.0) for i in range(200)]
        q = np.vstack([unit(rng) for _ in range(100)])
        f1 = [circular_frame(float(i), 1.0, 2.0) for i in range(100)]
        idx = build_index(descs2)
        strat = MatchStrategy(SECOND_NEAREST, 0.97)
        got = {(t.frame1.x, t.frame2.x, round(t.ratio, 9))
               for t in match_second_nearest(q, f1, idx, frames2, strat)}
        expected = set()
        for i in range(100):
            d = np.linalg.norm(descs2 - q[i], axis=1)
            order = np.argsort(d, kind="stable")
            ratio = d[order[0]] / d[order[1]]
            if ratio <= strat.threshold:
                expected.add((float(i), float(order[0]), round(ratio, 9)))
        assert got == expected


class TestFilterDuplicates:
    def test_empty(self):
        assert filter_duplicates([]) == []

    def test_two_copies_merge(self):
        t = TentativeCorrespondence(circular_frame(5.0, 5.0, 2.0),
                                    circular_frame(9.0, 9.0, 2.0), 0.5)
        u = TentativeCorrespondence(circular_frame(5.5, 5.0, 2.0),
                                    circular_frame(9.0, 9.5, 2.0), 0.6)
        out = filter_duplicates([t, u])
        assert len(out) == 1
        assert out[0].duplicate_count == 2
        assert out[0].ratio == 0.5

    def test_planted_clusters_against_union_find(self):
        rng = np.random.default_rng(9)
        tcs = []
        for c in range(10):
            cx1, cy1 = rng.uniform(50, 450, 2)
            cx2, cy2 = rng.uniform(50, 450, 2)
            for _ in range(5):
                tcs.append(TentativeCorrespondence(
                    circular_frame(cx1 + rng.uniform(-1, 1),
                                   cy1 + rng.uniform(-1, 1), 2.0),
                    circular_frame(cx2 + rng.uniform(-1, 1),
                                   cy2 + rng.uniform(-1, 1), 2.0),
                    float(rng.uniform(0.1, 0.8))))
        out = filter_duplicates(tcs, radius=4.0)

        # independent union-find oracle over the same radius
        n = len(tcs)
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(n):
            for j in range(i + 1, n):
                a, b = tcs[i], tcs[j]
                if (math.hypot(a.frame1.x - b.frame1.x, a.frame1.y - b.frame1.y) <= 4.0
                        and math.hypot(a.frame2.x - b.frame2.x,
                                       a.frame2.y - b.frame2.y) <= 4.0):
                    parent[find(i)] = find(j)
        n_clusters = len({find(i) for i in range(n)})
        assert len(out) == n_clusters == 10

    def test_idempotent(self):
        rng = np.random.default_rng(10)
        tcs = [TentativeCorrespondence(
            circular_frame(rng.uniform(0, 100), rng.uniform(0, 100), 2.0),
            circular_frame(rng.uniform(0, 100), rng.uniform(0, 100), 2.0),
            float(rng.uniform(0, 1))) for _ in range(60)]
        once = filter_duplicates(tcs)
        twice = filter_duplicates(once)
        assert len(once) == len(twice)
        assert [t.duplicate_count for t in once] == \
            [t.duplicate_count for t in twice]

    def test_duplicate_count_conserved(self):
        rng = np.random.default_rng(11)
        tcs = [TentativeCorrespondence(
            circular_frame(rng.uniform(0, 30), rng.uniform(0, 30), 2.0),
            circular_frame(rng.uniform(0, 30), rng.uniform(0, 30), 2.0),
            float(rng.uniform(0, 1))) for _ in range(40)]
        out = filter_duplicates(tcs)
        assert sum(t.duplicate_count for t in out) == 40


def test_strategy_thresholds_per_detector():
    assert strategy_for("mser").threshold == 0.85
    assert strategy_for("dog").threshold == 0.85
    assert strategy_for("hessaff").threshold == 0.80
    assert strategy_for("mser", SECOND_NEAREST).threshold == 0.8
    assert strategy_for("mser").inconsistency_radius == 10.0
