"""FAST detection, BRIEF description and Hamming matching."""

import numpy as np
import pytest

from voxloc.errors import TooSmallError
from voxloc.features import (Keypoint, compute_descriptors, detect_keypoints,
                             match_descriptors, to_grayscale)
from voxloc import _kernels

RNG = np.random.default_rng(31)


def square_image(size=96, square=20, lo=0.1, hi=0.9):
    img = np.full((size, size), lo)
    a = (size - square) // 2
    img[a:a + square, a:a + square] = hi
    return img


class TestDetect:
    def test_constant_image_no_keypoints(self):
        assert detect_keypoints(np.full((64, 64), 0.5)) == []

    def test_too_small(self):
        with pytest.raises(TooSmallError):
            detect_keypoints(np.zeros((16, 16)))

    def test_bright_square_corners(self):
        # FAST-9 fires near 90-degree corners and rejects straight edges,
        # so a large square yields detections only at its four corners.
        img = square_image()
        kps = detect_keypoints(img, fast_threshold=0.1, nms_radius=4)
        assert len(kps) >= 4
        corners = np.array([[38, 38], [38, 57], [57, 38], [57, 57]])
        for kp in kps:
            d = np.min(np.linalg.norm(corners - [kp.x, kp.y], axis=1))
            assert d <= 3.0  # nothing in flat regions or along edges
        hit = {tuple(c) for c in corners
               if any(np.hypot(kp.x - c[0], kp.y - c[1]) <= 3.0 for kp in kps)}
        assert len(hit) == 4

    def test_margin_respected(self):
        rng = np.random.default_rng(5)
        img = rng.uniform(0, 1, (64, 64))
        for kp in detect_keypoints(img, fast_threshold=0.02):
            assert 16 <= kp.x < 48
            assert 16 <= kp.y < 48

    def test_max_count_and_ordering(self):
        rng = np.random.default_rng(6)
        img = rng.uniform(0, 1, (128, 128))
        kps = detect_keypoints(img, max_count=10, fast_threshold=0.02)
        assert len(kps) == 10
        scores = [kp.score for kp in kps]
        assert scores == sorted(scores, reverse=True)

    def test_nms_separation(self):
        rng = np.random.default_rng(7)
        img = rng.uniform(0, 1, (96, 96))
        r = 5
        kps = detect_keypoints(img, fast_threshold=0.02, nms_radius=r)
        pts = np.array([[kp.x, kp.y] for kp in kps])
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                assert np.max(np.abs(pts[i] - pts[j])) > r

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        img = rng.uniform(0, 1, (80, 80))
        a = detect_keypoints(img)
        b = detect_keypoints(img)
        assert a == b

    def test_backend_parity_fast_score(self):
        if len(_kernels.available_backends()) < 2:
            pytest.skip("compiled backend not built")
        rng = np.random.default_rng(9)
        img = rng.uniform(0, 1, (48, 64))
        a = _kernels.fast_score(img, 0.05, impl=_kernels.get_impl("native"))
        b = _kernels.fast_score(img, 0.05, impl=_kernels.get_impl("python"))
        assert np.array_equal(a, b)


class TestDescribe:
    def test_deterministic(self):
        rng = np.random.default_rng(10)
        img = rng.uniform(0, 1, (64, 64))
        kps = detect_keypoints(img, fast_threshold=0.02)[:5]
        d1, k1 = compute_descriptors(img, kps)
        d2, k2 = compute_descriptors(img, kps)
        assert np.array_equal(d1, d2)
        assert k1 == k2

    def test_margin_violators_dropped_and_reported(self):
        rng = np.random.default_rng(11)
        img = rng.uniform(0, 1, (64, 64))
        kps = [Keypoint(5.0, 30.0, 1.0), Keypoint(30.0, 30.0, 1.0),
               Keypoint(30.0, 60.0, 1.0)]
        desc, kept = compute_descriptors(img, kps)
        assert kept == [1]
        assert desc.shape == (1, 32)

    def test_translation_stability(self):
        rng = np.random.default_rng(12)
        base = rng.uniform(0, 1, (96, 128))
        shift = 7
        moved = np.roll(base, shift, axis=1)
        kps = detect_keypoints(base, fast_threshold=0.02, max_count=50)
        kps = [kp for kp in kps if kp.x + shift < 128 - 16]
        d0, k0 = compute_descriptors(base, kps)
        moved_kps = [Keypoint(kp.x + shift, kp.y, kp.score) for kp in kps]
        d1, k1 = compute_descriptors(moved, moved_kps)
        assert k0 == k1
        dists = np.array([_kernels.hamming_matrix(d0[i:i + 1], d1[i:i + 1])[0, 0]
                          for i in range(len(d0))])
        assert np.median(dists) <= 40

    def test_independent_noise_images_near_half_distance(self):
        rng = np.random.default_rng(13)
        a_img = rng.uniform(0, 1, (64, 64))
        b_img = rng.uniform(0, 1, (64, 64))
        pts = [Keypoint(float(x), float(y), 1.0)
               for x in (20, 32, 44) for y in (20, 32, 44)]
        da, _ = compute_descriptors(a_img, pts)
        db, _ = compute_descriptors(b_img, pts)
        dists = _kernels.hamming_matrix(da, db).ravel()
        assert abs(float(np.mean(dists)) - 128.0) <= 10.0

    def test_backend_parity(self):
        if len(_kernels.available_backends()) < 2:
            pytest.skip("compiled backend not built")
        rng = np.random.default_rng(14)
        img = rng.uniform(0, 1, (64, 64))
        kps = [Keypoint(20.0, 20.0, 1.0), Keypoint(40.0, 30.0, 1.0)]
        from voxloc._brief_pattern import BRIEF_PAIRS
        from scipy.ndimage import gaussian_filter
        sm = gaussian_filter(img, sigma=2.0, mode="nearest")
        xs = np.array([20.0, 40.0])
        ys = np.array([20.0, 30.0])
        a = _kernels.brief_describe(sm, xs, ys, BRIEF_PAIRS,
                                    impl=_kernels.get_impl("native"))
        b = _kernels.brief_describe(sm, xs, ys, BRIEF_PAIRS,
                                    impl=_kernels.get_impl("python"))
        assert np.array_equal(a, b)


class TestMatching:
    def _descriptors(self, n, rng):
        return rng.integers(0, 256, (n, 32)).astype(np.uint8)

    def test_identity_matching(self):
        rng = np.random.default_rng(15)
        d = self._descriptors(30, rng)
        matches = match_descriptors(d, d)
        assert len(matches) == 30
        for m in matches:
            assert m.index_query == m.index_reference
            assert m.hamming_distance == 0

    def test_recovers_permutation(self):
        rng = np.random.default_rng(16)
        d = self._descriptors(40, rng)
        perm = rng.permutation(40)
        matches = match_descriptors(d, d[perm])
        assert len(matches) == 40
        inv = np.argsort(perm)
        for m in matches:
            assert m.index_reference == inv[m.index_query]

    def test_thresholds_respected(self):
        rng = np.random.default_rng(17)
        q = self._descriptors(50, rng)
        r = self._descriptors(60, rng)
        for m in match_descriptors(q, r, max_distance=30, ratio_threshold=0.7):
            assert m.hamming_distance <= 30
            assert m.ratio <= 0.7

    def test_cross_check_symmetric(self):
        rng = np.random.default_rng(18)
        q = self._descriptors(40, rng)
        r = self._descriptors(45, rng)
        ab = {(m.index_query, m.index_reference)
              for m in match_descriptors(q, r, max_distance=256, ratio_threshold=1.0)}
        ba = {(m.index_reference, m.index_query)
              for m in match_descriptors(r, q, max_distance=256, ratio_threshold=1.0)}
        assert ab == ba

    def test_one_to_one(self):
        rng = np.random.default_rng(19)
        q = self._descriptors(80, rng)
        r = self._descriptors(30, rng)
        matches = match_descriptors(q, r, max_distance=256, ratio_threshold=1.0)
        refs = [m.index_reference for m in matches]
        assert len(refs) == len(set(refs))

    def test_translated_image_matches_with_consistent_offset(self):
        rng = np.random.default_rng(20)
        base = rng.uniform(0, 1, (120, 160))
        shift = 9
        moved = np.roll(base, shift, axis=1)
        kq = detect_keypoints(base, fast_threshold=0.02, max_count=200)
        kr = detect_keypoints(moved, fast_threshold=0.02, max_count=200)
        dq, iq = compute_descriptors(base, kq)
        dr, ir = compute_descriptors(moved, kr)
        matches = match_descriptors(dq, dr)
        # keypoints whose shifted twin stays inside the margin are matchable
        eligible = [k for k in kq if k.x + shift < 160 - 16]
        assert len(matches) >= 0.7 * len(eligible) * 0.9  # allow NMS divergence
        offsets = [kr[ir[m.index_reference]].x - kq[iq[m.index_query]].x
                   for m in matches]
        mode = np.median(offsets)
        assert abs(mode - shift) <= 1.0
        consistent = np.sum(np.abs(np.array(offsets) - shift) <= 1.0)
        assert consistent >= 0.7 * len(matches)

    def test_empty_inputs(self):
        assert match_descriptors(np.zeros((0, 32), np.uint8),
                                 np.zeros((5, 32), np.uint8)) == []

    def test_hamming_backend_parity(self):
        if len(_kernels.available_backends()) < 2:
            pytest.skip("compiled backend not built")
        rng = np.random.default_rng(21)
        a = rng.integers(0, 256, (37, 32)).astype(np.uint8)
        b = rng.integers(0, 256, (23, 32)).astype(np.uint8)
        ha = _kernels.hamming_matrix(a, b, impl=_kernels.get_impl("native"))
        hb = _kernels.hamming_matrix(a, b, impl=_kernels.get_impl("python"))
        assert np.array_equal(ha, hb)
        # spot-check against bit counting
        want = bin(int.from_bytes(a[3].tobytes(), "big")
                   ^ int.from_bytes(b[5].tobytes(), "big")).count("1")
        assert ha[3, 5] == want


class TestGrayscale:
    def test_luma_weights(self):
        img = np.zeros((4, 4, 3))
        img[..., 0] = 1.0
        assert np.allclose(to_grayscale(img), 0.299)
        img = np.ones((4, 4, 3))
        assert np.allclose(to_grayscale(img), 1.0)
