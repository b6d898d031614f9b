import math

import numpy as np
import pytest

from mods.verify import (FUNDAMENTAL, HOMOGRAPHY, estimate_lo_ransac,
                         fundamental_from_points, homography_from_points,
                         load_homography, normalize_homography,
                         sampson_errors, save_homography,
                         score_against_ground_truth, symmetric_transfer_error,
                         symmetric_transfer_errors)


def apply_h(h, pts):
    p = np.hstack([pts, np.ones((pts.shape[0], 1))]) @ h.T
    return p[:, :2] / p[:, 2:3]


def plant_homography(rng):
    th = rng.uniform(-0.4, 0.4)
    s = rng.uniform(0.85, 1.2)
    c, sn = math.cos(th), math.sin(th)
    tx = rng.choice([-1.0, 1.0]) * rng.uniform(60, 120)
    ty = rng.choice([-1.0, 1.0]) * rng.uniform(60, 120)
    return np.array([[s * c, -s * sn, tx],
                     [s * sn, s * c, ty],
                     [rng.normal() * 2e-5, rng.normal() * 2e-5, 1.0]])


def relative_error(m, h_gt):
    hn = normalize_homography(h_gt)
    i = int(np.argmax(np.abs(hn)))
    return float(np.linalg.norm(m / m.ravel()[i] - hn) / np.linalg.norm(hn))


def planted_instance(rng, n_in=50, n_out=50, span=800.0, gate=1.6):
    """Correspondence set whose first n_in rows are inliers by construction:
    sigma-0.5 noise resampled until the pair passes the gate under h."""
    h = plant_homography(rng)
    x1 = rng.uniform(0, span, (n_in, 2))
    clean = apply_h(h, x1)
    x2 = clean.copy()
    for i in range(n_in):
        for _ in range(100):
            cand = clean[i] + rng.normal(0, 0.5, 2)
            if symmetric_transfer_errors(h, x1[i:i + 1], cand[None, :])[0] <= gate:
                x2[i] = cand
                break
    o1 = rng.uniform(0, span, (n_out, 2))
    o2 = rng.uniform(0, span, (n_out, 2))
    tcs = np.vstack([np.hstack([x1, x2]), np.hstack([o1, o2])])
    return h, tcs


class TestHomographyEstimation:
    def test_exact_four_points(self):
        rng = np.random.default_rng(0)
        h = plant_homography(rng)
        x1 = np.array([[10.0, 20.0], [400.0, 30.0], [50.0, 380.0], [420.0, 400.0]])
        x2 = apply_h(h, x1)
        g = estimate_lo_ransac(np.hstack([x1, x2]), seed=1)
        assert relative_error(g.M, h) < 1e-6
        assert g.n_inliers == 4

    def test_under_determined(self):
        with pytest.raises(ValueError):
            estimate_lo_ransac(np.zeros((3, 4)))

    def test_planted_recovery(self):
        ok = 0
        for trial in range(20):
            rng = np.random.default_rng(3000 + trial)
            h, tcs = planted_instance(rng)
            g = estimate_lo_ransac(tcs, threshold=2.0, seed=trial)
            if g.inlier_mask[:50].sum() >= 48 and relative_error(g.M, h) < 1e-2:
                ok += 1
        assert ok >= 19

    def test_determinism(self):
        rng = np.random.default_rng(77)
        h, tcs = planted_instance(rng)
        a = estimate_lo_ransac(tcs, seed=5)
        b = estimate_lo_ransac(tcs, seed=5)
        assert np.array_equal(a.M, b.M)
        assert np.array_equal(a.inlier_mask, b.inlier_mask)
        assert a.iterations_run == b.iterations_run

    def test_normalization_largest_entry_one(self):
        rng = np.random.default_rng(78)
        h, tcs = planted_instance(rng)
        g = estimate_lo_ransac(tcs, seed=2)
        assert np.abs(g.M).max() == 1.0

    def test_inliers_satisfy_threshold(self):
        rng = np.random.default_rng(79)
        h, tcs = planted_instance(rng)
        g = estimate_lo_ransac(tcs, threshold=2.0, seed=3)
        err = symmetric_transfer_errors(g.M, tcs[:, :2], tcs[:, 2:])
        assert np.all(err[g.inlier_mask] <= 2.0)


class TestSymmetricTransfer:
    def test_exact_pair_zero(self):
        rng = np.random.default_rng(1)
        h = plant_homography(rng)
        x1 = np.array([[30.0, 40.0]])
        x2 = apply_h(h, x1)
        assert symmetric_transfer_error(h, (x1[0], x2[0])) < 1e-9

    def test_hand_case(self):
        assert symmetric_transfer_error(np.eye(3), ((0.0, 0.0), (3.0, 4.0))) \
            == pytest.approx(math.sqrt(50.0))

    def test_direct_formula_oracle(self):
        rng = np.random.default_rng(2)
        h = plant_homography(rng)
        hinv = np.linalg.inv(h)
        for _ in range(20):
            a = rng.uniform(0, 500, 2)
            b = rng.uniform(0, 500, 2)
            fwd = apply_h(h, a[None, :])[0] - b
            bwd = apply_h(hinv, b[None, :])[0] - a
            expect = math.sqrt(fwd @ fwd + bwd @ bwd)
            assert symmetric_transfer_error(h, (a, b)) == pytest.approx(expect)

    def test_singular_rejected(self):
        with pytest.raises(ValueError):
            symmetric_transfer_error(np.diag([1.0, 1.0, 0.0]), ((0, 0), (1, 1)))


class TestFundamental:
    @staticmethod
    def planted_f(rng, n=60):
        # two-camera geometry: F = [e2]_x P2 pinv(P1)
        p1 = np.hstack([np.eye(3), np.zeros((3, 1))])
        rt = np.hstack([_rot(rng.uniform(-0.3, 0.3)),
                        rng.uniform(-1, 1, (3, 1)) + [[2.0], [0.0], [0.0]]])
        k = np.array([[500.0, 0.0, 320.0], [0.0, 500.0, 240.0], [0.0, 0.0, 1.0]])
        pm1 = k @ p1
        pm2 = k @ rt
        pts3 = np.hstack([rng.uniform(-2, 2, (n, 2)), rng.uniform(4, 10, (n, 1))])
        x1 = _proj(pm1, pts3)
        x2 = _proj(pm2, pts3)
        c1 = np.hstack([-np.linalg.inv(pm1[:, :3]) @ pm1[:, 3], [1.0]])
        e2 = pm2 @ c1
        ex = np.array([[0.0, -e2[2], e2[1]], [e2[2], 0.0, -e2[0]],
                       [-e2[1], e2[0], 0.0]])
        f = ex @ pm2 @ np.linalg.pinv(pm1)
        return f / np.linalg.norm(f), x1, x2

    def test_planted_epipolar_recovery(self):
        rng = np.random.default_rng(4)
        f, x1, x2 = self.planted_f(rng)
        x2n = x2 + rng.normal(0, 0.3, x2.shape)
        o1 = rng.uniform(0, 640, (30, 2))
        o2 = rng.uniform(0, 640, (30, 2))
        tcs = np.vstack([np.hstack([x1, x2n]), np.hstack([o1, o2])])
        g = estimate_lo_ransac(tcs, model=FUNDAMENTAL, threshold=1.5, seed=9)
        assert g.inlier_mask[:60].sum() >= 50
        # rank 2 within 1e-8, Frobenius norm 1
        s = np.linalg.svd(g.M, compute_uv=False)
        assert s[2] < 1e-8
        assert np.linalg.norm(g.M) == pytest.approx(1.0)
        err = sampson_errors(g.M, tcs[:, :2], tcs[:, 2:])
        assert np.all(err[g.inlier_mask] <= 1.5)

    def test_seven_point_minimum(self):
        rng = np.random.default_rng(5)
        f, x1, x2 = self.planted_f(rng, n=7)
        with pytest.raises(ValueError):
            estimate_lo_ransac(np.hstack([x1, x2])[:6], model=FUNDAMENTAL)


def _rot(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _proj(pm, pts3):
    p = np.hstack([pts3, np.ones((pts3.shape[0], 1))]) @ pm.T
    return p[:, :2] / p[:, 2:3]


class TestScoring:
    def test_gt_equals_estimate(self):
        rng = np.random.default_rng(6)
        h, tcs = planted_instance(rng)
        g = estimate_lo_ransac(tcs, threshold=2.0, seed=4)
        score = score_against_ground_truth(g, tcs, g.M, tol=2.0)
        assert score["correct_inliers"] == score["inliers"]

    def test_all_outliers(self):
        rng = np.random.default_rng(7)
        h = plant_homography(rng)
        tcs = rng.uniform(0, 500, (40, 4))
        score = score_against_ground_truth(None, tcs, h, tol=3.0)
        assert score["correct_matches"] == 0 or score["correct_matches"] < 3
        assert score["inliers"] == 0

    def test_counts_match_direct_scan(self):
        rng = np.random.default_rng(8)
        h, tcs = planted_instance(rng, n_in=30, n_out=30)
        g = estimate_lo_ransac(tcs, threshold=2.0, seed=5)
        score = score_against_ground_truth(g, tcs, h, tol=3.0)
        err = symmetric_transfer_errors(h, tcs[:, :2], tcs[:, 2:])
        correct = err <= 3.0
        assert score["correct_matches"] == int(correct.sum())
        assert score["correct_inliers"] == int((correct & g.inlier_mask).sum())
        assert score["tentatives"] == 60
        assert score["correct_pct"] == pytest.approx(100.0 * correct.mean())


def test_homography_file_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    h = plant_homography(rng)
    p = tmp_path / "h.txt"
    save_homography(p, h)
    assert np.array_equal(load_homography(p), h)
