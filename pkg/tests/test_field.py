"""Voxel field sampling, rendering quadrature, PSNR and serialization."""

import numpy as np
import pytest

from voxloc import _kernels
from voxloc.errors import (BadMagicError, ChecksumMismatchError,
                           DimensionMismatchError, VersionUnsupportedError)
from voxloc.field import (RadianceField, RenderOptions, load_field, psnr,
                          render_image, render_ray, render_rays, save_field)
from voxloc.geom import CameraModel, Pose, Ray, look_at

RNG = np.random.default_rng(42)


def random_field(dims=(8, 8, 8), bbox=((-1, -1, -1), (1, 1, 1)), rng=RNG,
                 max_density=3.0):
    return RadianceField(np.array(bbox[0], dtype=float), np.array(bbox[1], dtype=float),
                         rng.uniform(0, max_density, dims),
                         rng.uniform(0, 1, dims + (3,)))


class TestSampleField:
    def test_voxel_center_returns_stored_value(self):
        f = random_field()
        voxel = f.voxel_size
        idx = (2, 3, 4)
        center = f.bbox_min + (np.array(idx) + 0.5) * voxel
        sigma, rgb = f.sample(center[None])
        assert sigma[0] == pytest.approx(f.density[idx], abs=1e-12)
        assert np.allclose(rgb[0], f.color[idx], atol=1e-12)

    def test_midpoint_between_adjacent_centers_is_mean(self):
        f = random_field()
        voxel = f.voxel_size
        a = (2, 3, 4)
        b = (3, 3, 4)
        mid = f.bbox_min + (np.array([2.5, 3, 4]) + 0.5) * voxel
        sigma, rgb = f.sample(mid[None])
        assert sigma[0] == pytest.approx(0.5 * (f.density[a] + f.density[b]), abs=1e-12)
        assert np.allclose(rgb[0], 0.5 * (f.color[a] + f.color[b]), atol=1e-12)

    def test_matches_explicit_weight_oracle(self):
        f = random_field()
        rng = np.random.default_rng(0)
        pts = rng.uniform(-0.85, 0.85, (50, 3))
        sigma, rgb = f.sample(pts)
        voxel = f.voxel_size
        for k, p in enumerate(pts):
            g = (p - f.bbox_min) / voxel - 0.5
            i0 = np.floor(g).astype(int)
            want_s = 0.0
            want_c = np.zeros(3)
            for dx in (0, 1):
                for dy in (0, 1):
                    for dz in (0, 1):
                        idx = np.clip(i0 + [dx, dy, dz], 0, 7)
                        delta = g - (i0 + [dx, dy, dz])
                        w = np.prod(1.0 - np.abs(delta))
                        want_s += w * f.density[tuple(idx)]
                        want_c += w * f.color[tuple(idx)]
            assert sigma[k] == pytest.approx(want_s, abs=1e-10)
            assert np.allclose(rgb[k], want_c, atol=1e-10)

    def test_outside_bbox_is_vacuum_black(self):
        f = random_field()
        sigma, rgb = f.sample(np.array([[2.0, 0.0, 0.0], [0.0, -1.5, 0.0]]))
        assert np.all(sigma == 0.0)
        assert np.all(rgb == 0.0)

    def test_density_clamped_and_color_clipped_on_construction(self):
        f = RadianceField(np.zeros(3) - 1, np.ones(3),
                          np.full((8, 8, 8), -2.0),
                          np.full((8, 8, 8, 3), 1.7))
        assert np.all(f.density == 0.0)
        assert np.all(f.color == 1.0)


class TestRenderRay:
    def test_vacuum_gives_background(self):
        f = RadianceField.zeros((8, 8, 8), (-1, -1, -1), (1, 1, 1))
        opts = RenderOptions(samples_per_ray=32, t_near=0.1, t_far=3.0,
                             background=(0.2, 0.4, 0.6))
        rgb, depth, opacity = render_ray(f, Ray(np.array([-2.0, 0, 0]),
                                                np.array([1.0, 0, 0])), opts)
        assert np.allclose(rgb, [0.2, 0.4, 0.6], atol=1e-12)
        assert depth == 0.0
        assert opacity == pytest.approx(0.0, abs=1e-12)

    def test_homogeneous_medium_matches_closed_form(self):
        # constant sigma over the whole sampled span: opacity = 1 - exp(-sigma L)
        for sigma in (0.25, 1.0, 4.0):
            f = RadianceField(np.array([-50.0, -50, -50]), np.array([50.0, 50, 50]),
                              np.full((8, 8, 8), sigma), np.full((8, 8, 8, 3), 0.5))
            opts = RenderOptions(samples_per_ray=128, t_near=0.5, t_far=4.5)
            _, _, opacity = render_ray(f, Ray(np.zeros(3), np.array([0.0, 0, 1.0])), opts)
            want = 1.0 - np.exp(-sigma * 4.0)
            assert opacity == pytest.approx(want, rel=0.02)

    def test_opaque_slab_depth(self):
        # slab at z in [0.4, 0.6] from origin along +z: expected depth ~ 0.5 * front
        f = RadianceField.zeros((10, 10, 10), (-1, -1, -1), (1, 1, 1))
        f.density[:, :, 7] = 500.0  # slab voxel layer: z in [0.4, 0.6]
        opts = RenderOptions(samples_per_ray=256, t_near=0.05, t_far=1.9)
        ray = Ray(np.array([0.0, 0.0, -0.95]), np.array([0.0, 0.0, 1.0]))
        _, depth, opacity = render_ray(f, ray, opts)
        assert opacity == pytest.approx(1.0, abs=1e-6)
        dt = (1.9 - 0.05) / 256
        # surface: slab density ramps (trilinear) from z=0.3; ray starts at -0.95
        assert abs(depth - 1.3) < 0.1 + dt

    def test_conservation(self):
        f = random_field()
        rng = np.random.default_rng(1)
        o = rng.uniform(-1, 1, (500, 3))
        d = rng.normal(size=(500, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r, dep, trans, wsum = _kernels.render_rays(
            f.density, f.color, f.bbox_min, f.bbox_max, o, d, 0.05, 3.0, 64,
            None, (1.0, 1.0, 1.0), 1)
        assert np.max(np.abs(wsum + trans - 1.0)) < 1e-6

    def test_monotonicity_in_density(self):
        f = random_field()
        opts = RenderOptions(samples_per_ray=64, t_near=0.1, t_far=2.5)
        ray_o = np.array([[-0.9, 0.05, 0.1]])
        ray_d = np.array([[1.0, 0.0, 0.0]])
        _, _, op0 = render_rays(f, ray_o, ray_d, opts)
        f.density[4, 4, 4] += 5.0
        _, _, op1 = render_rays(f, ray_o, ray_d, opts)
        assert op1[0] >= op0[0] - 1e-12

    def test_depth_within_range_when_defined(self):
        f = random_field(max_density=5.0)
        rng = np.random.default_rng(3)
        o = rng.uniform(-1, 1, (200, 3))
        d = rng.normal(size=(200, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        opts = RenderOptions(samples_per_ray=64, t_near=0.1, t_far=2.5)
        _, depth, opacity = render_rays(f, o, d, opts)
        defined = opacity >= 1e-6
        assert np.all(depth[defined] >= 0.1 - 1e-9)
        assert np.all(depth[defined] <= 2.5 + 1e-9)
        assert np.all(depth[~defined] == 0.0)


class TestBackendParity:
    @pytest.mark.skipif(len(_kernels.available_backends()) < 2,
                        reason="compiled backend not built")
    def test_render_agrees(self):
        f = random_field()
        rng = np.random.default_rng(2)
        o = rng.uniform(-1.2, 1.2, (300, 3))
        d = rng.normal(size=(300, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        jitter = rng.random((300, 48))
        outs = []
        for name in ("native", "python"):
            impl = _kernels.get_impl(name)
            outs.append(_kernels.render_rays(f.density, f.color, f.bbox_min,
                                             f.bbox_max, o, d, 0.05, 3.0, 48,
                                             jitter, (1.0, 0.5, 0.25), 1, impl=impl))
        for a, b in zip(outs[0], outs[1]):
            assert np.allclose(a, b, atol=1e-12, rtol=1e-12)

    @pytest.mark.skipif(len(_kernels.available_backends()) < 2,
                        reason="compiled backend not built")
    def test_gradient_agrees(self):
        f = random_field()
        rng = np.random.default_rng(3)
        o = rng.uniform(-0.9, 0.9, (64, 3))
        d = rng.normal(size=(64, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        tgt = rng.uniform(0, 1, (64, 3))
        results = []
        for name in ("native", "python"):
            impl = _kernels.get_impl(name)
            gd = np.zeros_like(f.density)
            gc = np.zeros_like(f.color)
            loss, rgb = _kernels.render_rays_grad(
                f.density, f.color, f.bbox_min, f.bbox_max, o, d, 0.05, 3.0, 48,
                None, (1.0, 1.0, 1.0), tgt, gd, gc, impl=impl)
            results.append((loss, rgb, gd, gc))
        assert results[0][0] == pytest.approx(results[1][0], rel=1e-12)
        for a, b in zip(results[0][1:], results[1][1:]):
            assert np.allclose(a, b, atol=1e-11, rtol=1e-9)


class TestRenderImage:
    CAM = CameraModel.from_fov(64, 48, 65.0)

    def test_vacuum_field_constant_background(self):
        f = RadianceField.zeros((8, 8, 8), (-1, -1, -1), (1, 1, 1))
        opts = RenderOptions(samples_per_ray=16, t_near=0.1, t_far=3.0,
                             background=(0.3, 0.6, 0.9))
        view = render_image(f, self.CAM, look_at([3.0, 0, 0], [0, 0, 0]), opts)
        assert np.allclose(view.rgb, np.broadcast_to([0.3, 0.6, 0.9], view.rgb.shape))
        assert np.all(view.depth == 0.0)

    def test_deterministic_across_threads(self):
        f = random_field()
        opts = RenderOptions(samples_per_ray=32, t_near=0.1, t_far=3.0,
                             stratified=True, seed=11)
        pose = look_at([2.5, 0.3, 0.4], [0, 0, 0])
        a = render_image(f, self.CAM, pose, opts, threads=1)
        b = render_image(f, self.CAM, pose, opts, threads=4)
        assert np.array_equal(a.rgb, b.rgb)
        assert np.array_equal(a.depth, b.depth)
        assert np.array_equal(a.opacity, b.opacity)

    def test_stratified_seed_reproducible(self):
        f = random_field()
        opts = RenderOptions(samples_per_ray=32, t_near=0.1, t_far=3.0,
                             stratified=True, seed=7)
        pose = look_at([2.5, 0.0, 0.0], [0, 0, 0])
        a = render_image(f, self.CAM, pose, opts)
        b = render_image(f, self.CAM, pose, opts)
        assert np.array_equal(a.rgb, b.rgb)


class TestPsnr:
    def test_identical_images_capped(self):
        img = RNG.uniform(0, 1, (16, 16, 3))
        assert psnr(img, img) == 100.0

    def test_uniform_offset_formula(self):
        a = np.full((8, 8, 3), 0.4)
        b = np.full((8, 8, 3), 0.5)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            psnr(np.zeros((4, 4, 3)), np.zeros((5, 4, 3)))


class TestFieldFile:
    def test_round_trip_bit_identical(self, tmp_path):
        f = random_field(dims=(9, 7, 5), bbox=((-2, -1, 0), (1, 2, 3)))
        p1 = tmp_path / "a.rfld"
        p2 = tmp_path / "b.rfld"
        n = save_field(f, p1)
        assert n == p1.stat().st_size
        g = load_field(p1)
        save_field(g, p2)
        assert p1.read_bytes() == p2.read_bytes()
        h = load_field(p2)
        assert np.array_equal(g.density, h.density)
        assert np.array_equal(g.color, h.color)

    def test_file_size_arithmetic(self, tmp_path):
        f = RadianceField.zeros((64, 64, 64), (0, 0, 0), (1, 1, 1))
        n = save_field(f, tmp_path / "f.rfld")
        assert n == 44 + 64 ** 3 * 16 + 4

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.rfld"
        p.write_bytes(b"NOPE" + b"\0" * 100)
        with pytest.raises(BadMagicError):
            load_field(p)

    def test_bad_version(self, tmp_path):
        f = random_field()
        p = tmp_path / "f.rfld"
        save_field(f, p)
        blob = bytearray(p.read_bytes())
        blob[4] = 99
        p.write_bytes(bytes(blob))
        with pytest.raises(VersionUnsupportedError):
            load_field(p)

    def test_checksum_mismatch(self, tmp_path):
        f = random_field()
        p = tmp_path / "f.rfld"
        save_field(f, p)
        blob = bytearray(p.read_bytes())
        blob[60] ^= 0xFF
        p.write_bytes(bytes(blob))
        with pytest.raises(ChecksumMismatchError):
            load_field(p)

    def test_serialization_is_x_fastest(self, tmp_path):
        f = RadianceField.zeros((4, 3, 2), (0, 0, 0), (1, 1, 1), color_value=0.0)
        f.density[1, 0, 0] = 7.0
        p = tmp_path / "f.rfld"
        save_field(f, p)
        blob = p.read_bytes()
        dens = np.frombuffer(blob, dtype="<f4", count=24, offset=44)
        assert dens[1] == pytest.approx(7.0)  # x varies fastest
