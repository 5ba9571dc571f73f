"""Pose algebra, projection and rotation-metric tests.

Oracles are independent of the library under test: 4x4 homogeneous
matrices assembled with scipy.spatial.transform.Rotation, and direct
scalar formula evaluation.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from voxloc.errors import NonPositiveDepthError, PixelOutOfBoundsError
from voxloc.geom import (CameraModel, Pose, Ray, camera_rays, format_tum_line,
                         look_at, parse_tum_line, project, ray_for_pixel,
                         read_trajectory, rotation_error, unproject,
                         write_trajectory)

RNG = np.random.default_rng(1234)


def random_pose(rng=RNG):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Pose(q, rng.uniform(-5, 5, 3))


def to_matrix(pose):
    """Independent 4x4 oracle. Pose stores (w,x,y,z); scipy wants (x,y,z,w)."""
    m = np.eye(4)
    m[:3, :3] = Rotation.from_quat(np.roll(pose.q, -1)).as_matrix()
    m[:3, 3] = pose.t
    return m


def pose_close(a, b, tol=1e-9):
    return (rotation_error(a, b) < tol
            and np.linalg.norm(a.t - b.t) < tol)


unit_quats = st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4).filter(
    lambda q: np.linalg.norm(q) > 1e-3)
vecs = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3)


class TestPose:
    def test_compose_identity(self):
        p = random_pose()
        assert pose_close(Pose.identity().compose(p), p)
        assert pose_close(p.compose(Pose.identity()), p)

    def test_compose_inverse_is_identity(self):
        for _ in range(20):
            p = random_pose()
            assert pose_close(p.compose(p.inverse()), Pose.identity())
            assert pose_close(p.inverse().compose(p), Pose.identity())

    def test_compose_matches_matrix_product(self):
        for _ in range(50):
            a, b = random_pose(), random_pose()
            got = to_matrix(a.compose(b))
            want = to_matrix(a) @ to_matrix(b)
            assert np.allclose(got, want, atol=1e-9)

    def test_inverse_matches_matrix_inverse(self):
        for _ in range(50):
            p = random_pose()
            assert np.allclose(to_matrix(p.inverse()), np.linalg.inv(to_matrix(p)),
                               atol=1e-9)

    def test_inverse_involution(self):
        p = random_pose()
        assert pose_close(p.inverse().inverse(), p)

    def test_quaternion_normalized_after_ops(self):
        a, b = random_pose(), random_pose()
        for p in (a, b, a.compose(b), a.inverse()):
            assert abs(np.linalg.norm(p.q) - 1.0) < 1e-9

    @given(unit_quats, unit_quats, unit_quats, vecs, vecs, vecs)
    @settings(max_examples=50, deadline=None)
    def test_composition_associative(self, qa, qb, qc, ta, tb, tc):
        a, b, c = Pose(qa, ta), Pose(qb, tb), Pose(qc, tc)
        lhs = a.compose(b).compose(c)
        rhs = a.compose(b.compose(c))
        assert pose_close(lhs, rhs, tol=1e-9)

    @given(unit_quats, vecs, vecs)
    @settings(max_examples=50, deadline=None)
    def test_quaternion_sign_ambiguity(self, q, t, v):
        p = Pose(np.asarray(q), t)
        n = Pose(-np.asarray(q), t)
        assert rotation_error(p, n) < 1e-9
        assert np.allclose(p.rotate(np.asarray(v)), n.rotate(np.asarray(v)), atol=1e-9)

    def test_apply_matches_matrix(self):
        p = random_pose()
        pts = RNG.uniform(-3, 3, (10, 3))
        hom = np.concatenate([pts, np.ones((10, 1))], axis=1)
        want = (to_matrix(p) @ hom.T).T[:, :3]
        assert np.allclose(p.apply(pts), want, atol=1e-9)

    def test_degenerate_quaternion_rejected(self):
        with pytest.raises(ValueError):
            Pose(np.zeros(4), np.zeros(3))


class TestRotationError:
    def test_zero_for_equal(self):
        p = random_pose()
        assert rotation_error(p, p) == pytest.approx(0.0, abs=1e-12)

    def test_quarter_turn(self):
        p = Pose.from_axis_angle([0, 0, 1], math.pi / 2)
        assert rotation_error(p, Pose.identity()) == pytest.approx(math.pi / 2, abs=1e-12)

    def test_matches_trace_formula(self):
        for _ in range(50):
            a, b = random_pose(), random_pose()
            r = to_matrix(a)[:3, :3].T @ to_matrix(b)[:3, :3]
            want = math.acos(np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0))
            assert rotation_error(a, b) == pytest.approx(want, abs=1e-7)

    def test_symmetric(self):
        a, b = random_pose(), random_pose()
        assert rotation_error(a, b) == pytest.approx(rotation_error(b, a), abs=1e-12)

    def test_triangle_inequality(self):
        for _ in range(50):
            a, b, c = random_pose(), random_pose(), random_pose()
            assert rotation_error(a, c) <= rotation_error(a, b) + rotation_error(b, c) + 1e-9

    def test_range(self):
        for _ in range(50):
            assert 0.0 <= rotation_error(random_pose(), random_pose()) <= math.pi


CAM = CameraModel(fx=300.0, fy=310.0, cx=159.5, cy=119.5, width=320, height=240)


class TestCamera:
    def test_validation(self):
        with pytest.raises(ValueError):
            CameraModel(fx=-1, fy=1, cx=0, cy=0, width=10, height=10)
        with pytest.raises(ValueError):
            CameraModel(fx=1, fy=1, cx=20, cy=0, width=10, height=10)

    def test_optical_axis_projects_to_principal_point(self):
        assert np.allclose(project(CAM, [0.0, 0.0, 1.0]), [CAM.cx, CAM.cy])

    def test_project_unproject_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            u = rng.uniform(0, CAM.width)
            v = rng.uniform(0, CAM.height)
            d = rng.uniform(0.01, 1e4)
            p = unproject(CAM, [u, v], d)
            assert p[2] == pytest.approx(d)
            assert np.allclose(project(CAM, p), [u, v], atol=1e-9)

    def test_project_matches_scalar_formula(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            p = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 10)])
            want = (CAM.fx * p[0] / p[2] + CAM.cx, CAM.fy * p[1] / p[2] + CAM.cy)
            assert np.allclose(project(CAM, p), want, atol=1e-12)

    def test_nonpositive_depth_raises(self):
        with pytest.raises(NonPositiveDepthError):
            project(CAM, [0.0, 0.0, 0.0])
        with pytest.raises(NonPositiveDepthError):
            project(CAM, [0.0, 0.0, -2.0])
        with pytest.raises(NonPositiveDepthError):
            unproject(CAM, [10.0, 10.0], 0.0)


class TestRays:
    def test_center_pixel_identity_pose(self):
        ray = ray_for_pixel(CAM, Pose.identity(), (CAM.cx, CAM.cy))
        assert np.allclose(ray.direction, [0, 0, 1], atol=1e-12)
        assert np.allclose(ray.origin, [0, 0, 0])

    def test_center_pixel_rotated_pose(self):
        pose = Pose.from_axis_angle([0, 1, 0], math.pi)
        ray = ray_for_pixel(CAM, pose, (CAM.cx, CAM.cy))
        assert np.allclose(ray.direction, [0, 0, -1], atol=1e-12)

    def test_out_of_bounds(self):
        with pytest.raises(PixelOutOfBoundsError):
            ray_for_pixel(CAM, Pose.identity(), (-1.0, 10.0))
        with pytest.raises(PixelOutOfBoundsError):
            ray_for_pixel(CAM, Pose.identity(), (10.0, CAM.height))

    def test_points_on_ray_reproject_to_pixel(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            pose = random_pose(rng)
            px = (rng.uniform(0, CAM.width - 1), rng.uniform(0, CAM.height - 1))
            ray = ray_for_pixel(CAM, pose, px)
            w2c = pose.inverse()
            for t in (0.5, 2.0, 10.0):
                pt_cam = w2c.apply(ray.origin + t * ray.direction)
                assert np.allclose(project(CAM, pt_cam), px, atol=1e-6)

    def test_camera_rays_match_single_rays(self):
        pose = random_pose()
        origins, dirs = camera_rays(CAM, pose)
        for px in [(0, 0), (17, 5), (319, 239)]:
            idx = px[1] * CAM.width + px[0]
            single = ray_for_pixel(CAM, pose, (float(px[0]), float(px[1])))
            assert np.allclose(dirs[idx], single.direction, atol=1e-12)
            assert np.allclose(origins[idx], pose.t)

    def test_ray_direction_normalized(self):
        r = Ray(np.zeros(3), np.array([1.0, 2.0, 2.0]))
        assert abs(np.linalg.norm(r.direction) - 1.0) < 1e-12


class TestLookAt:
    def test_looks_at_target(self):
        eye = np.array([3.0, 1.0, 2.0])
        target = np.array([0.0, 0.0, 0.5])
        pose = look_at(eye, target)
        fwd = pose.rotate(np.array([0.0, 0.0, 1.0]))
        want = (target - eye) / np.linalg.norm(target - eye)
        assert np.allclose(fwd, want, atol=1e-12)
        # y should not point up (camera y is down)
        assert pose.rotate(np.array([0.0, 1.0, 0.0]))[2] <= 0.0


class TestTumFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        stamped = [(0.1 * i, random_pose(rng)) for i in range(10)]
        path = tmp_path / "traj.txt"
        write_trajectory(path, stamped, header="test")
        back = read_trajectory(path)
        assert len(back) == 10
        for (ts, p), (ts2, p2) in zip(stamped, back):
            assert ts2 == pytest.approx(ts, abs=1e-9)
            assert pose_close(p, p2, tol=1e-6)

    def test_written_files_reparse_identically(self, tmp_path):
        stamped = [(0.1 * i, random_pose()) for i in range(5)]
        p1 = tmp_path / "a.txt"
        p2 = tmp_path / "b.txt"
        write_trajectory(p1, stamped)
        write_trajectory(p2, read_trajectory(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_quaternion_canonicalized(self):
        p = random_pose()
        flipped = Pose(-p.q, p.t)
        assert format_tum_line(1.0, p) == format_tum_line(1.0, flipped)

    def test_field_order(self):
        line = format_tum_line(2.5, Pose.identity())
        assert line.split() == ["2.5", "0", "0", "0", "0", "0", "0", "1"]
        ts, pose = parse_tum_line(line)
        assert ts == 2.5 and pose_close(pose, Pose.identity())
