import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dapotion import encoder, pose_io
from reference import brute_force_encode, hat_color_code

UNIT_GRID = pose_io.GridSpec(dims=(8, 8, 8), scale=(1.0, 1.0, 1.0))


def random_grid_poses(rng, dims=(8, 8, 8), T=4, J=2, margin=0.0):
    grid = pose_io.GridSpec(dims=dims, scale=(1.0, 1.0, 1.0))
    upper = np.asarray(dims, dtype=np.float64) - 1.0 - margin
    pos = rng.uniform(margin, upper, size=(T, J, 3))
    return pose_io.GridPoseSequence(positions=pos, grid=grid)


class TestColorCode:
    def test_two_channel_endpoints(self):
        np.testing.assert_array_equal(encoder.color_code(1, 10, 2), [0.0, 1.0])
        np.testing.assert_array_equal(encoder.color_code(10, 10, 2), [1.0, 0.0])

    def test_two_channel_midpoint(self):
        np.testing.assert_array_equal(encoder.color_code(5, 9, 2), [0.5, 0.5])

    def test_three_channel_values(self):
        np.testing.assert_allclose(encoder.color_code(5, 9, 3), [0.0, 1.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(encoder.color_code(3, 9, 3), [0.0, 0.5, 0.5], atol=1e-15)

    def test_two_channel_matches_linear_ramp_bitwise(self):
        for T in range(2, 65):
            for t in range(1, T + 1):
                s = (t - 1) / (T - 1)
                code = encoder.color_code(t, T, 2)
                assert code[0] == s and code[1] == 1.0 - s

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 64), st.integers(2, 5), st.data())
    def test_partition_of_unity(self, T, C, data):
        t = data.draw(st.integers(1, T))
        code = encoder.color_code(t, T, C)
        assert abs(code.sum() - 1.0) <= 1e-12
        assert np.all(code >= 0.0) and np.all(code <= 1.0)
        assert np.count_nonzero(code) <= 2

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 40), st.integers(2, 5), st.data())
    def test_matches_hat_formula(self, T, C, data):
        t = data.draw(st.integers(1, T))
        np.testing.assert_allclose(encoder.color_code(t, T, C), hat_color_code(t, T, C), atol=1e-15)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            encoder.color_code(0, 5, 2)
        with pytest.raises(ValueError):
            encoder.color_code(6, 5, 2)
        with pytest.raises(ValueError):
            encoder.color_code(1, 1, 2)
        with pytest.raises(ValueError):
            encoder.color_code(1, 5, 1)


class TestRasterize:
    def test_peak_on_voxel(self):
        h = encoder.rasterize_heatmap((3, 4, 2), (8, 8, 8), sigma=1.5)
        assert h[3, 4, 2] == 1.0

    def test_value_at_one_sigma(self):
        h = encoder.rasterize_heatmap((3.0, 3.0, 3.0), (8, 8, 8), sigma=2.0)
        assert h[5, 3, 3] == pytest.approx(math.exp(-0.5), rel=1e-6)

    def test_truncation(self):
        h = encoder.rasterize_heatmap((4.0, 4.0, 4.0), (16, 16, 16), sigma=1.0, truncation_radius=3.0)
        assert h[4, 4, 4 + 3] == pytest.approx(math.exp(-4.5), rel=1e-6)  # on the ball boundary
        assert h[4, 4, 4 + 4] == 0.0
        assert h[4 + 3, 4 + 3, 4] == 0.0  # euclidean ball, not a box: dist = 3*sqrt(2)

    def test_accepts_grid_spec(self):
        h = encoder.rasterize_heatmap((1, 1, 1), UNIT_GRID, sigma=1.0)
        assert h.shape == (8, 8, 8)
        assert h.dtype == np.float32


class TestSchemeOps:
    def test_colorize_endpoint_code(self):
        rng = np.random.default_rng(0)
        h = rng.random((4, 4, 4), dtype=np.float32)
        out = encoder.colorize(h, np.array([1.0, 0.0]))
        np.testing.assert_array_equal(out[0], h)
        np.testing.assert_array_equal(out[1], np.zeros_like(h))

    def test_colorize_midpoint_code(self):
        h = np.ones((2, 2, 2), dtype=np.float32)
        out = encoder.colorize(h, np.array([0.5, 0.5]))
        np.testing.assert_allclose(out, 0.5)

    def test_colorize_channel_sum_recovers_heatmap(self):
        rng = np.random.default_rng(1)
        h = rng.random((5, 4, 3), dtype=np.float32)
        code = encoder.color_code(3, 7, 4)
        out = encoder.colorize(h, code)
        np.testing.assert_allclose(out.sum(axis=0), h, atol=1e-6)

    def test_aggregate_static_joint(self):
        # fixed voxel over T=3 frames, C=2: peak value per channel is (1.5, 1.5)
        volumes = []
        for t in range(1, 4):
            h = encoder.rasterize_heatmap((2, 2, 2), (5, 5, 5), sigma=1.0)
            volumes.append(encoder.colorize(h, encoder.color_code(t, 3, 2)))
        s = encoder.aggregate_sum(volumes)
        np.testing.assert_allclose(s[:, 2, 2, 2], [1.5, 1.5], atol=1e-6)

    def test_aggregate_additivity_and_identity(self):
        rng = np.random.default_rng(2)
        vols = [rng.random((2, 3, 3, 3), dtype=np.float32) for _ in range(4)]
        np.testing.assert_array_equal(encoder.aggregate_sum(vols[:1]), vols[0])
        total = encoder.aggregate_sum(vols)
        partial = encoder.aggregate_sum([encoder.aggregate_sum(vols[:2]), encoder.aggregate_sum(vols[2:])])
        np.testing.assert_allclose(total, partial, atol=1e-6)

    def test_aggregate_errors(self):
        with pytest.raises(ValueError, match="empty"):
            encoder.aggregate_sum([])
        with pytest.raises(ValueError, match="shape mismatch"):
            encoder.aggregate_sum([np.zeros((2, 3, 3, 3), np.float32), np.zeros((2, 4, 3, 3), np.float32)])

    def test_max_normalize(self):
        rng = np.random.default_rng(3)
        s = rng.random((3, 4, 4, 4)).astype(np.float32) * 7.0
        u = encoder.max_normalize(s)
        np.testing.assert_allclose(u.reshape(3, -1).max(axis=1), 1.0, rtol=1e-6)

    def test_max_normalize_zero_channel(self):
        s = np.zeros((2, 3, 3, 3), dtype=np.float32)
        s[0, 1, 1, 1] = 2.0
        u = encoder.max_normalize(s)
        assert u[0, 1, 1, 1] == 1.0
        np.testing.assert_array_equal(u[1], 0.0)

    def test_max_normalize_scale_invariant(self):
        rng = np.random.default_rng(4)
        s = rng.random((2, 4, 4, 4)).astype(np.float32)
        np.testing.assert_allclose(encoder.max_normalize(3.7 * s), encoder.max_normalize(s), atol=1e-6)

    def test_intensity_matches_loop(self):
        rng = np.random.default_rng(5)
        u = rng.random((3, 3, 3, 3)).astype(np.float32)
        i = encoder.intensity(u)
        expected = np.zeros((3, 3, 3))
        for c in range(3):
            for x in range(3):
                for y in range(3):
                    for z in range(3):
                        expected[x, y, z] += u[c, x, y, z]
        np.testing.assert_allclose(i, expected, atol=1e-6)

    def test_intensity_normalize_example(self):
        u = np.ones((2, 1, 1, 1), dtype=np.float32)
        n = encoder.intensity_normalize(u, encoder.intensity(u), epsilon=1.0)
        np.testing.assert_allclose(n, 1.0 / 3.0, rtol=1e-6)

    def test_intensity_normalize_bounds(self):
        rng = np.random.default_rng(6)
        u = encoder.max_normalize(rng.random((4, 5, 5, 5)).astype(np.float32))
        n = encoder.intensity_normalize(u, encoder.intensity(u))
        assert np.all(n >= 0.0) and np.all(n < 1.0)
        assert np.all(n <= u + 1e-7)


class TestEncodeClip:
    def test_channel_counts(self):
        rng = np.random.default_rng(7)
        poses = random_grid_poses(rng, T=3, J=2)
        for scheme, expected in (("nui", 14), ("u", 6), ("n", 6), ("i", 2)):
            cfg = encoder.EncoderConfig(grid=UNIT_GRID, sigma=1.0, channels=3, scheme=scheme)
            assert encoder.encode_clip(poses, cfg).channel_count == expected

    def test_j16_u_has_48_channels(self):
        rng = np.random.default_rng(8)
        poses = random_grid_poses(rng, T=2, J=16)
        cfg = encoder.EncoderConfig(grid=UNIT_GRID, sigma=1.0, channels=3, scheme="u")
        assert encoder.encode_clip(poses, cfg).channel_count == 48

    @pytest.mark.parametrize("scheme", encoder.SCHEMES)
    def test_matches_brute_force(self, scheme):
        rng = np.random.default_rng(hash(scheme) % 2**32)
        dims = tuple(int(d) for d in rng.integers(4, 9, size=3))
        grid = pose_io.GridSpec(dims=dims, scale=(1.0, 1.0, 1.0))
        T, J, C = int(rng.integers(2, 5)), int(rng.integers(1, 3)), int(rng.integers(2, 4))
        pos = rng.uniform(0, np.asarray(dims) - 1.0, size=(T, J, 3))
        poses = pose_io.GridPoseSequence(positions=pos, grid=grid)
        cfg = encoder.EncoderConfig(grid=grid, sigma=1.3, channels=C, scheme=scheme, truncation_radius=2.5)
        got = encoder.encode_clip(poses, cfg)
        want = brute_force_encode(pos, dims, 1.3, 2.5, C, scheme)
        assert got.data.shape == want.shape
        np.testing.assert_allclose(got.data, want, atol=1e-6)

    def test_nui_block_order(self):
        # per joint: [n (C), u (C), i (1)]
        rng = np.random.default_rng(9)
        poses = random_grid_poses(rng, T=3, J=1)
        base = encoder.EncoderConfig(grid=UNIT_GRID, sigma=1.0, channels=2, scheme="nui")
        nui = encoder.encode_clip(poses, base).data
        u = encoder.encode_clip(poses, encoder.EncoderConfig(grid=UNIT_GRID, sigma=1.0, channels=2, scheme="u")).data
        n = encoder.encode_clip(poses, encoder.EncoderConfig(grid=UNIT_GRID, sigma=1.0, channels=2, scheme="n")).data
        i = encoder.encode_clip(poses, encoder.EncoderConfig(grid=UNIT_GRID, sigma=1.0, channels=2, scheme="i")).data
        np.testing.assert_array_equal(nui[:2], n)
        np.testing.assert_array_equal(nui[2:4], u)
        np.testing.assert_array_equal(nui[4:5], i)

    def test_time_reversal_equivariance(self):
        rng = np.random.default_rng(10)
        cfg = encoder.EncoderConfig(grid=UNIT_GRID, sigma=1.0, channels=3, scheme="nui")
        for _ in range(10):
            poses = random_grid_poses(rng, T=int(rng.integers(2, 7)), J=2)
            rev = pose_io.GridPoseSequence(positions=poses.positions[::-1].copy(), grid=poses.grid)
            fwd = encoder.encode_clip(poses, cfg)
            bwd = encoder.encode_clip(rev, cfg)
            C = cfg.channels
            for j in range(2):
                a, b = fwd.joint_block(j), bwd.joint_block(j)
                np.testing.assert_allclose(b[:C], a[:C][::-1], atol=1e-6)  # n channels reversed
                np.testing.assert_allclose(b[C : 2 * C], a[C : 2 * C][::-1], atol=1e-6)  # u reversed
                np.testing.assert_allclose(b[2 * C], a[2 * C], atol=1e-6)  # i unchanged

    def test_spatial_flip_equivariance(self):
        rng = np.random.default_rng(11)
        cfg = encoder.EncoderConfig(grid=UNIT_GRID, sigma=0.8, channels=3, scheme="nui", truncation_radius=2.0)
        margin = cfg.sigma * cfg.truncation_radius
        for axis in range(3):
            poses = random_grid_poses(rng, T=4, J=2, margin=margin)
            mirrored = poses.positions.copy()
            mirrored[:, :, axis] = (UNIT_GRID.dims[axis] - 1.0) - mirrored[:, :, axis]
            enc = encoder.encode_clip(poses, cfg)
            enc_m = encoder.encode_clip(pose_io.GridPoseSequence(positions=mirrored, grid=UNIT_GRID), cfg)
            flip = (slice(None),) + tuple(slice(None, None, -1) if a == axis else slice(None) for a in range(3))
            np.testing.assert_allclose(enc_m.data, enc.data[flip], atol=1e-6)

    def test_grid_mismatch_rejected(self):
        rng = np.random.default_rng(12)
        poses = random_grid_poses(rng, dims=(8, 8, 8))
        other = pose_io.GridSpec(dims=(16, 16, 16), scale=(1.0, 1.0, 1.0))
        cfg = encoder.EncoderConfig(grid=other, sigma=1.0)
        with pytest.raises(ValueError, match="grid dims"):
            encoder.encode_clip(poses, cfg)

    def test_default_sigma_scales_with_grid(self):
        cfg = encoder.EncoderConfig(grid=pose_io.GridSpec(dims=(16, 16, 16), scale=(1, 1, 1)))
        assert cfg.sigma == pytest.approx(1.0)
        cfg64 = encoder.EncoderConfig(grid=pose_io.GridSpec(dims=(64, 64, 64), scale=(1, 1, 1)))
        assert cfg64.sigma == pytest.approx(4.0)

    def test_config_hash_stable(self):
        cfg = encoder.EncoderConfig(grid=UNIT_GRID, sigma=1.0)
        assert cfg.config_hash() == encoder.EncoderConfig(grid=UNIT_GRID, sigma=1.0).config_hash()
        other = encoder.EncoderConfig(grid=UNIT_GRID, sigma=2.0)
        assert cfg.config_hash() != other.config_hash()


class TestResample:
    def test_identity(self):
        rng = np.random.default_rng(13)
        v = rng.random((2, 4, 5, 6), dtype=np.float32)
        out = encoder.resample(v, (4, 5, 6))
        assert out is not v
        np.testing.assert_array_equal(out, v)

    def test_constant_volume(self):
        v = np.full((1, 4, 4, 4), 3.25, dtype=np.float32)
        out = encoder.resample(v, (7, 3, 9))
        np.testing.assert_allclose(out, 3.25, rtol=1e-6)
        assert out.shape == (1, 7, 3, 9)

    def test_midpoint_insertion(self):
        rng = np.random.default_rng(14)
        v = rng.random((1, 2, 2, 2), dtype=np.float32)
        out = encoder.resample(v, (3, 3, 3))
        np.testing.assert_array_equal(out[0, ::2, ::2, ::2], v[0])  # corners preserved
        assert out[0, 1, 0, 0] == pytest.approx((v[0, 0, 0, 0] + v[0, 1, 0, 0]) / 2, rel=1e-6)
        assert out[0, 0, 1, 0] == pytest.approx((v[0, 0, 0, 0] + v[0, 0, 1, 0]) / 2, rel=1e-6)
        assert out[0, 1, 1, 1] == pytest.approx(v.mean(), rel=1e-5)

    def test_downsample_endpoints(self):
        v = np.arange(8, dtype=np.float32).reshape(1, 8, 1, 1) * np.ones((1, 8, 2, 2), np.float32)
        out = encoder.resample(v, (4, 2, 2))
        assert out[0, 0, 0, 0] == 0.0
        assert out[0, -1, 0, 0] == 7.0

    def test_bad_target(self):
        with pytest.raises(ValueError, match="target dims"):
            encoder.resample(np.zeros((1, 4, 4, 4), np.float32), (1, 4, 4))


class TestCollapseDepth:
    def test_sums_depth_axis(self):
        rng = np.random.default_rng(15)
        v = rng.random((3, 4, 5, 6)).astype(np.float32)
        out = encoder.collapse_depth(v)
        assert out.shape == (3, 4, 5)
        np.testing.assert_allclose(out, v.sum(axis=-1), rtol=1e-6)
