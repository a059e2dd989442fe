import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from firerecon.errors import ConfigError
from firerecon.radiometry import AbsorptionModel, SpectralBins, absorption_coefficient, planck_radiance
from firerecon.render import (
    CameraView,
    FireVolume,
    RenderConfig,
    apply_exposure_and_encode,
    centered_origin,
    generate_ray,
    generate_rays,
    luminance,
    march_ray,
    reinhard_linear,
    render_image,
    render_rays,
    tonemap_reinhard,
)
from firerecon.voxelgrid import GridDims, flat_to_xyz, xyz_to_flat

BINS = SpectralBins()


def slab(n=(8, 8, 8), density=20e27, temperature=1500.0, h=0.01):
    dims = GridDims(*n)
    total = dims.total
    return FireVolume.from_fields(
        dims, np.full(total, temperature), np.full(total, density), np.ones(total, bool), h, centered_origin(dims, h)
    )


def random_volume(n=8, seed=0, h=0.01):
    rng = np.random.default_rng(seed)
    dims = GridDims(n, n, n)
    occ = rng.random(dims.total) < 0.7
    return FireVolume.from_fields(
        dims, rng.uniform(900, 2000, dims.total), rng.uniform(1e27, 60e27, dims.total), occ, h,
        centered_origin(dims, h),
    )


def front_view(volume, w=24, h=18):
    return CameraView.orbit(volume.center, 4 * volume.extent.max(), 0.0, w, h, 30.0)


class TestCamera:
    def test_principal_ray(self):
        v = CameraView.look_at((0, 0, 5), (0, 0, 0), 5, 3)
        o, d = generate_ray(v, 2, 1)
        assert np.allclose(o, [0, 0, 5])
        assert np.allclose(d, [0, 0, -1], atol=1e-15)

    def test_adjacent_pixels_differ_horizontally(self):
        v = CameraView.look_at((1, 2, 3), (0, 0, 0), 8, 6)
        _, d1 = generate_ray(v, 3, 2)
        _, d2 = generate_ray(v, 4, 2)
        c1, c2 = v.rotation.T @ d1 / (v.rotation.T @ d1)[2], v.rotation.T @ d2 / (v.rotation.T @ d2)[2]
        assert c1[1] == pytest.approx(c2[1], abs=1e-12)
        assert c1[0] < c2[0]

    def test_out_of_bounds(self):
        v = CameraView.look_at((0, 0, 5), (0, 0, 0), 4, 4)
        for x, y in [(-1, 0), (4, 0), (0, 4)]:
            with pytest.raises(IndexError):
                generate_ray(v, x, y)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-180, 180), st.floats(-60, 60))
    def test_unit_directions(self, az, el):
        v = CameraView.orbit((0.1, 0.2, 0.3), 2.0, az, 7, 5, 40.0, el)
        _, d = generate_rays(v)
        assert np.allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)
        _, c = generate_ray(v, 3, 2)
        assert np.allclose(c, (np.array([0.1, 0.2, 0.3]) - v.position) / 2.0, atol=1e-12)

    def test_rows_match_single_rays(self):
        v = CameraView.look_at((0.3, -0.2, 2), (0, 0, 0), 6, 4)
        o, d = generate_rays(v)
        _, d5 = generate_ray(v, 5, 3)
        assert np.allclose(d[3 * 6 + 5], d5)

    def test_invalid_pose(self):
        with pytest.raises(ConfigError):
            CameraView(4, 4, 10.0, 1.5, 1.5, np.hstack([2 * np.eye(3), np.zeros((3, 1))]))
        with pytest.raises(ConfigError):
            CameraView(4, 4, 10.0, 1.5, 1.5, goal=np.zeros((3, 4, 3)))


class TestMarchOracles:
    def test_beer_lambert(self):
        vol = slab(density=20e27)
        h = vol.voxel_size
        step = h / 8
        L = vol.extent[0]
        kappa = absorption_coefficient(20e27)
        # a cold slab (emission negligible vs background) seen along x
        _, trans = march_ray(vol, (-1.0, 0.0, 0.0), (1.0, 0.0, 0.0), BINS, step, return_transmittance=True)
        assert trans == pytest.approx(np.exp(-kappa * L), abs=1e-3)
        bg = np.ones(BINS.n_bins)
        cold = slab(density=20e27, temperature=300.0)
        rad = march_ray(cold, (-1.0, 0.0, 0.0), (1.0, 0.0, 0.0), BINS, step, background=bg)
        assert np.allclose(rad, np.exp(-kappa * L), atol=1e-3)

    def test_homogeneous_emitter(self):
        # the explicit per-sample update has relative error ~ kappa * step / 2
        vol = slab(density=20e27, temperature=1800.0)
        kappa, L = absorption_coefficient(20e27), vol.extent[0]
        rad = march_ray(vol, (-1.0, 0.0, 0.0), (1.0, 0.0, 0.0), BINS, vol.voxel_size / 8)
        exact = planck_radiance(1800.0, BINS.centers) * (1 - np.exp(-kappa * L))
        assert np.max(np.abs(rad / exact - 1)) < 1e-3

    def test_first_order_convergence(self):
        vol = slab(density=400e27, temperature=1800.0)
        kappa, L = absorption_coefficient(400e27), vol.extent[0]
        exact = planck_radiance(1800.0, BINS.centers[20]) * (1 - np.exp(-kappa * L))
        errs = []
        for step in (vol.voxel_size / 2, vol.voxel_size / 4, vol.voxel_size / 8):
            rad = march_ray(vol, (-1.0, 0.0, 0.0), (1.0, 0.0, 0.0), BINS, step)[20]
            errs.append(abs(rad - exact))
        for a, b in zip(errs, errs[1:]):
            assert 1.7 <= a / b <= 2.3

    def test_zero_density_black(self):
        vol = slab(density=0.0)
        view = front_view(vol)
        assert np.array_equal(render_image(vol, view), np.zeros((18, 24, 3)))

    def test_miss_returns_zero(self):
        vol = slab()
        rad = march_ray(vol, (-1.0, 1.0, 0.0), (1.0, 0.0, 0.0), BINS, 0.005)
        assert np.array_equal(rad, np.zeros(BINS.n_bins))

    def test_camera_outside_frustum(self):
        vol = random_volume()
        v = front_view(vol)
        moved = CameraView(v.width, v.height, v.focal, v.cx, v.cy, np.column_stack([v.rotation, v.position + [5, 0, 0]]))
        assert np.array_equal(render_image(vol, moved), np.zeros((v.height, v.width, 3)))

    def test_transmittance_bounds_and_monotone(self):
        vol = random_volume(seed=2)
        o, d = np.array([[-1.0, 0.001, 0.002]]), np.array([[1.0, 0.0, 0.0]])
        prev = 1.0
        for t_max in np.linspace(0.9, 1.1, 30):
            _, tr = render_rays(vol, o, d, BINS, 0.002, t_max=np.array([t_max]))
            assert 0 < tr[0] <= prev
            prev = tr[0]

    def test_segment_additivity(self):
        vol = random_volume(seed=3)
        step = vol.voxel_size / 4
        o = np.array([[-vol.extent[0] / 2 - 0.0, 0.0013, -0.0021]])
        d = np.array([[1.0, 0.0, 0.0]])
        full, _ = render_rays(vol, o, d, BINS, step)
        half = vol.extent[0] / 2
        first, t1 = render_rays(vol, o, d, BINS, step, t_max=np.array([half]))
        second, _ = render_rays(vol, o + half * d, d, BINS, step)
        assert np.allclose(full, first + t1[:, None] * second, rtol=1e-6)


class TestRenderImage:
    def test_vectorised_matches_reference(self):
        vol = random_volume(seed=4)
        view = front_view(vol, 10, 8)
        img = render_image(vol, view)
        from firerecon.radiometry import spectrum_to_rgb

        o, d = generate_rays(view)
        ref = np.array([spectrum_to_rgb(march_ray(vol, o[i], d[i], BINS, vol.voxel_size / 2), BINS) for i in range(len(o))])
        assert np.allclose(img.reshape(-1, 3), np.maximum(ref, 0), rtol=1e-9, atol=1e-12 * ref.max())

    def test_deterministic_and_thread_invariant(self):
        vol = random_volume(seed=5)
        view = front_view(vol)
        a, b = render_image(vol, view), render_image(vol, view)
        assert np.array_equal(a, b)
        assert np.allclose(render_image(vol, view, threads=3), a, rtol=1e-12, atol=0)

    def test_rigid_rotation_invariance(self):
        vol = random_volume(seed=6)
        view = CameraView.look_at((0.07, 0.05, 0.3), (0.0, 0.0, 0.0), 20, 16, 30.0)
        arr_t = flat_to_xyz(vol.temperature.values, vol.dims)
        arr_d = flat_to_xyz(vol.density.values, vol.dims)
        arr_o = flat_to_xyz(vol.occupied, vol.dims)

        def rot(a):  # 90 degrees about +y: (x, y, z) -> (z, y, -x)
            return np.transpose(a[::-1], (2, 1, 0))

        rvol = FireVolume.from_fields(
            vol.dims, xyz_to_flat(rot(arr_t)), xyz_to_flat(rot(arr_d)), xyz_to_flat(rot(arr_o)), vol.voxel_size,
            vol.origin,
        )
        r = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
        rview = CameraView(view.width, view.height, view.focal, view.cx, view.cy,
                           np.column_stack([r @ view.rotation, r @ view.position]))
        a, b = render_image(vol, view), render_image(rvol, rview)
        assert np.allclose(a, b, rtol=1e-9, atol=1e-12 * a.max())

    def test_render_config(self):
        vol = random_volume(seed=7)
        view = front_view(vol)
        assert np.array_equal(RenderConfig().render(vol, view), render_image(vol, view))

    def test_trilinear_close_to_nearest_for_smooth_field(self):
        vol = slab(n=(8, 8, 8), density=30e27)
        view = front_view(vol)
        a = render_image(vol, view)
        b = render_image(vol, view, interpolation="trilinear")
        centre = (slice(7, 11), slice(10, 14))
        assert np.allclose(a[centre], b[centre], rtol=1e-6)


class TestExposureAndToneMapping:
    def test_exposure_linear(self):
        img = np.random.default_rng(0).random((4, 4, 3)) * 0.1
        from firerecon.color import srgb_decode

        a = srgb_decode(apply_exposure_and_encode(img, 2.0))
        b = srgb_decode(apply_exposure_and_encode(img, 4.0))
        assert np.allclose(b, 2 * a, rtol=1e-9)

    def test_black_stays_black(self):
        for s in (0.01, 1.0, 1000.0):
            assert np.array_equal(apply_exposure_and_encode(np.zeros((2, 2, 3)), s), np.zeros((2, 2, 3)))

    def test_saturation(self):
        img = np.full((2, 2, 3), 1e-3)
        assert np.allclose(apply_exposure_and_encode(img, 1000.0), 1.0)

    @pytest.mark.parametrize("s", [0.001, 2000.0])
    def test_exposure_range(self, s):
        with pytest.raises(ConfigError):
            apply_exposure_and_encode(np.zeros((1, 1, 3)), s)

    def test_reinhard_constant_image(self):
        img = np.full((3, 5, 3), 0.7)
        out = reinhard_linear(img, key=1.0)
        assert np.allclose(luminance(out), 0.5, atol=1e-6)

    def test_reinhard_scale_invariant(self):
        img = np.random.default_rng(1).random((6, 6, 3)) + 0.1
        assert np.allclose(tonemap_reinhard(img), tonemap_reinhard(2 * img), atol=1e-5)

    def test_reinhard_below_one(self):
        img = np.random.default_rng(2).random((6, 6, 3)) * 1e6
        assert np.all(luminance(reinhard_linear(img)) < 1)

    def test_reinhard_black(self):
        assert np.array_equal(tonemap_reinhard(np.zeros((2, 3, 3))), np.zeros((2, 3, 3)))

    def test_reinhard_key(self):
        with pytest.raises(ConfigError):
            reinhard_linear(np.ones((1, 1, 3)), key=0.0)
