"""Scene voxelization, trajectory generation, dataset synthesis and blur filtering."""

import math

import numpy as np
import pytest
from scipy.ndimage import uniform_filter
from scipy.signal import convolve2d

from voxloc.errors import (AllFilteredError, BadParamsError, EmptySceneError,
                           TooSmallError)
from voxloc.field import RenderOptions
from voxloc.geom import CameraModel
from voxloc.synthdata import (Box, Dataset, SceneSpec, Sphere, blockworld_scene,
                              blur_score, filter_blurred, generate_trajectory,
                              load_dataset, make_dataset, save_dataset,
                              voxelize_scene, TrajectoryParams)


class TestVoxelize:
    def test_empty_scene_rejected(self):
        with pytest.raises(EmptySceneError):
            voxelize_scene(SceneSpec([], (0, 0, 0), (1, 1, 1)), (8, 8, 8))

    def test_half_box_fills_half_the_voxels(self):
        spec = SceneSpec([Box(center=(0.25, 0.5, 0.5), extent=(0.5, 1.0, 1.0),
                              color=(1, 0, 0), sigma=10.0)],
                         (0, 0, 0), (1, 1, 1))
        f = voxelize_scene(spec, (16, 16, 16))
        assert int(np.count_nonzero(f.density)) == 16 ** 3 // 2

    def test_sphere_volume_fraction(self):
        r = 0.4
        spec = SceneSpec([Sphere(center=(0.5, 0.5, 0.5), radius=r,
                                 color=(0, 1, 0), sigma=5.0)],
                         (0, 0, 0), (1, 1, 1))
        f = voxelize_scene(spec, (64, 64, 64))
        voxel_volume = (1.0 / 64) ** 3
        got = np.count_nonzero(f.density) * voxel_volume
        want = 4.0 / 3.0 * math.pi * r ** 3
        assert got == pytest.approx(want, rel=0.05)

    def test_innermost_primitive_wins(self):
        outer = Box(center=(0.5, 0.5, 0.5), extent=(0.8, 0.8, 0.8),
                    color=(1, 0, 0), sigma=10.0)
        inner = Sphere(center=(0.5, 0.5, 0.5), radius=0.15,
                       color=(0, 0, 1), sigma=20.0)
        f = voxelize_scene(SceneSpec([inner, outer], (0, 0, 0), (1, 1, 1)),
                           (32, 32, 32))
        center_idx = (16, 16, 16)
        assert f.density[center_idx] == 20.0
        assert np.allclose(f.color[center_idx], [0, 0, 1])

    def test_idempotent(self):
        spec = blockworld_scene()
        a = voxelize_scene(spec, (16, 16, 16))
        b = voxelize_scene(spec, (16, 16, 16))
        assert np.array_equal(a.density, b.density)
        assert np.array_equal(a.color, b.color)


class TestTrajectories:
    def test_line_spacing(self):
        traj = generate_trajectory("line", TrajectoryParams(length=10.0), 11)
        centers = np.stack([p.t for _, p in traj])
        gaps = np.linalg.norm(np.diff(centers, axis=0), axis=1)
        assert np.allclose(gaps, 1.0, atol=1e-9)

    def test_orbit_radius(self):
        params = TrajectoryParams(length=8.0, radius=2.5, center=(1.0, -1.0, 0.5),
                                  height=1.3)
        traj = generate_trajectory("orbit", params, 15)
        for _, p in traj:
            d = np.linalg.norm(p.t[:2] - np.array([1.0, -1.0]))
            assert d == pytest.approx(2.5, abs=1e-9)
            assert p.t[2] == pytest.approx(1.3)

    def test_lawnmower_length_by_summation(self):
        # corners land on sample points for n=51, so chord sums are exact
        params = TrajectoryParams(length=10.0, rows=2, width=2.0)
        traj = generate_trajectory("lawnmower", params, 51)
        centers = np.stack([p.t for _, p in traj])
        total = float(np.sum(np.linalg.norm(np.diff(centers, axis=0), axis=1)))
        assert total == pytest.approx(10.0, abs=1e-9)

    def test_timestamps_strictly_increasing(self):
        traj = generate_trajectory("line", TrajectoryParams(length=2.0), 20)
        ts = [t for t, _ in traj]
        assert np.all(np.diff(ts) > 0)

    def test_bad_params(self):
        with pytest.raises(BadParamsError):
            generate_trajectory("line", TrajectoryParams(length=1.0), 1)
        with pytest.raises(BadParamsError):
            generate_trajectory("orbit", TrajectoryParams(length=1.0, radius=0.0), 5)
        with pytest.raises(BadParamsError):
            generate_trajectory("spiral", TrajectoryParams(length=1.0), 5)
        with pytest.raises(BadParamsError):
            generate_trajectory("lawnmower",
                                TrajectoryParams(length=1.0, rows=5, width=4.0), 5)


def small_setup():
    scene = blockworld_scene()
    gt = voxelize_scene(scene, (32, 32, 32))
    cam = CameraModel.from_fov(64, 48, 65.0)
    traj = generate_trajectory("orbit", TrajectoryParams(length=6.0, radius=3.0,
                                                         center=(0, 0, 0.6)), 12)
    opts = RenderOptions(samples_per_ray=48, t_near=0.3, t_far=6.5)
    return gt, cam, traj, opts


class TestMakeDataset:
    def test_clean_options_match_direct_renders(self):
        gt, cam, traj, opts = small_setup()
        from voxloc.field import render_image
        ds = make_dataset(gt, cam, traj, render_opts=opts)
        direct = render_image(gt, cam, traj[3][1], opts).rgb
        assert np.array_equal(ds.images[3], direct)

    def test_blur_count_exact(self):
        gt, cam, traj, opts = small_setup()
        ds = make_dataset(gt, cam, traj, render_opts=opts, blur_fraction=0.5, seed=3)
        assert len(ds.blurred_indices) == 6

    def test_noise_statistics(self):
        gt, cam, traj, opts = small_setup()
        clean = make_dataset(gt, cam, traj, render_opts=opts)
        noisy = make_dataset(gt, cam, traj, render_opts=opts, noise_sigma=0.05, seed=5)
        resid = []
        for a, b in zip(noisy.images, clean.images):
            interior = (b > 0.2) & (b < 0.8)  # clamp never binds here
            resid.append((a - b)[interior])
        std = float(np.std(np.concatenate(resid)))
        assert std == pytest.approx(0.05, rel=0.10)

    def test_bit_reproducible_for_seed(self):
        gt, cam, traj, opts = small_setup()
        a = make_dataset(gt, cam, traj, render_opts=opts, noise_sigma=0.02,
                         blur_fraction=0.25, seed=9)
        b = make_dataset(gt, cam, traj, render_opts=opts, noise_sigma=0.02,
                         blur_fraction=0.25, seed=9)
        for x, y in zip(a.images, b.images):
            assert np.array_equal(x, y)


class TestBlurScore:
    def test_constant_image_scores_zero(self):
        assert blur_score(np.full((16, 16, 3), 0.7)) == 0.0

    def test_blur_reduces_score(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            img = rng.uniform(0, 1, (32, 32, 3))
            blurred = uniform_filter(img, size=(5, 5, 1), mode="nearest")
            assert blur_score(img) > blur_score(blurred)

    def test_checkerboard_matches_hand_computation(self):
        img = np.indices((4, 4)).sum(axis=0) % 2 * 1.0
        lap = convolve2d(img, [[0, 1, 0], [1, -4, 1], [0, 1, 0]], mode="valid")
        assert blur_score(img) == pytest.approx(float(np.var(lap)), rel=1e-12)

    def test_too_small(self):
        with pytest.raises(TooSmallError):
            blur_score(np.zeros((2, 5)))


class TestFilterBlurred:
    def _dataset_with_blur(self, blur_fraction=0.5):
        gt, cam, traj, opts = small_setup()
        return make_dataset(gt, cam, traj, render_opts=opts,
                            blur_fraction=blur_fraction, blur_kernel=5, seed=7)

    def test_zero_threshold_keeps_everything(self):
        ds = self._dataset_with_blur(0.0)
        out = filter_blurred(ds, threshold=0.0)
        assert len(out) == len(ds)
        assert out.timestamps == ds.timestamps

    def test_keep_fraction_counts(self):
        ds = self._dataset_with_blur()
        out = filter_blurred(ds, keep_fraction=0.5)
        assert len(out) == 6

    def test_injected_blur_is_removed(self):
        ds = self._dataset_with_blur()
        blurred = set(ds.blurred_indices)
        out = filter_blurred(ds, keep_fraction=0.5)
        kept_ts = set(out.timestamps)
        kept_idx = {i for i in range(len(ds)) if ds.timestamps[i] in kept_ts}
        assert not (kept_idx & blurred)  # every blurred image removed

    def test_order_preserved_no_duplicates(self):
        ds = self._dataset_with_blur()
        out = filter_blurred(ds, keep_fraction=0.75)
        assert out.timestamps == sorted(out.timestamps)
        assert len(set(out.timestamps)) == len(out.timestamps)

    def test_all_filtered_raises(self):
        ds = self._dataset_with_blur(0.0)
        with pytest.raises(AllFilteredError):
            filter_blurred(ds, threshold=1e9)
        with pytest.raises(ValueError):
            filter_blurred(ds, keep_fraction=0.5, threshold=0.1)


class TestDatasetOnDisk:
    def test_round_trip(self, tmp_path):
        gt, cam, traj, opts = small_setup()
        ds = make_dataset(gt, cam, traj, render_opts=opts,
                          splits={"train": [0, 1, 2], "holdout": [3]})
        save_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        assert back.camera == ds.camera
        assert back.splits == {"train": [0, 1, 2], "holdout": [3]}
        assert len(back) == len(ds)
        for a, b in zip(back.images, ds.images):
            # 8-bit quantization on disk
            assert np.max(np.abs(a - b)) <= 0.5 / 255 + 1e-12
        for pa, pb in zip(back.poses, ds.poses):
            assert np.linalg.norm(pa.t - pb.t) < 1e-6

    def test_validation(self):
        cam = CameraModel.from_fov(8, 8, 60.0)
        img = np.zeros((8, 8, 3))
        from voxloc.geom import Pose
        with pytest.raises(ValueError):
            Dataset(cam, [0.0, 0.0], [Pose.identity()] * 2, [img, img])
        with pytest.raises(ValueError):
            Dataset(cam, [0.0], [Pose.identity()], [np.zeros((4, 4, 3))])
