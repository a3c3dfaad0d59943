import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import svbake as sv
from svbake.metrics import PSNR_CAP_DB
from svbake.scenes import pattern_views, quad_scene

from oracles import reference_ssim


def scalar_img(value, shape=(16, 16)):
    return sv.ImageF.from_array(np.full(shape, value, np.float32), sv.SCALAR)


def srgb_img(arr):
    return sv.ImageF.from_array(np.asarray(arr, np.float32), sv.SRGB)


class TestPsnr:
    def test_identical_hits_cap(self):
        a = scalar_img(0.3)
        assert sv.psnr(a, a) == PSNR_CAP_DB

    def test_zero_vs_one(self):
        assert abs(sv.psnr(scalar_img(0.0), scalar_img(1.0)) - 0.0) < 1e-9

    def test_zero_vs_half(self):
        # MSE 0.25, peak 1: 10*log10(4)
        assert abs(sv.psnr(scalar_img(0.0), scalar_img(0.5)) - 6.020599913279624) < 1e-6

    def test_symmetry(self, rng):
        a = sv.ImageF.from_array(rng.random((8, 8, 3), dtype=np.float32), sv.SRGB)
        b = sv.ImageF.from_array(rng.random((8, 8, 3), dtype=np.float32), sv.SRGB)
        assert sv.psnr(a, b) == sv.psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            sv.psnr(scalar_img(0.0), scalar_img(0.0, shape=(8, 8)))


class TestSsim:
    def test_identical(self, rng):
        a = sv.ImageF.from_array(rng.random((16, 16, 1), dtype=np.float32), sv.SCALAR)
        assert abs(sv.ssim(a, a) - 1.0) < 1e-9

    def test_constant_images_closed_form(self):
        # (2*0*1 + 1e-4) / (0 + 1 + 1e-4); the variance terms cancel
        got = sv.ssim(scalar_img(0.0), scalar_img(1.0))
        assert abs(got - 1e-4 / (1 + 1e-4)) < 1e-9

    def test_anticorrelated_negative(self, rng):
        # checkerboard-modulated noise keeps window means near zero, so
        # sign inversion flips the structure term and the score is negative
        i, j = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
        sign = np.where((i + j) % 2 == 0, 1.0, -1.0)
        noise = (sign * (0.45 + 0.05 * rng.random((16, 16)))).astype(np.float32)
        a = sv.ImageF.from_array(noise, sv.SCALAR)
        b = sv.ImageF.from_array(-noise, sv.SCALAR)
        score = sv.ssim(a, b)
        assert score < 0.0
        assert abs(score - reference_ssim(noise, -noise)) < 1e-7

    def test_matches_loop_reference(self, rng):
        x = rng.random((16, 16), dtype=np.float32)
        y = np.clip(x + rng.normal(0, 0.1, (16, 16)).astype(np.float32), 0, 1)
        a = sv.ImageF.from_array(x, sv.SCALAR)
        b = sv.ImageF.from_array(y.astype(np.float32), sv.SCALAR)
        assert abs(sv.ssim(a, b) - reference_ssim(x, y)) < 1e-7

    def test_multichannel_is_channel_mean(self, rng):
        data_a = rng.random((16, 16, 3), dtype=np.float32)
        data_b = rng.random((16, 16, 3), dtype=np.float32)
        a = sv.ImageF.from_array(data_a, sv.SRGB)
        b = sv.ImageF.from_array(data_b, sv.SRGB)
        per_channel = [
            sv.ssim(
                sv.ImageF.from_array(data_a[:, :, c], sv.SCALAR),
                sv.ImageF.from_array(data_b[:, :, c], sv.SCALAR),
            )
            for c in range(3)
        ]
        assert abs(sv.ssim(a, b) - np.mean(per_channel)) < 1e-12

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            sv.ssim(scalar_img(0.5, (8, 8)), scalar_img(0.5, (8, 8)))


class TestScaleInvariantNormalize:
    def test_removes_global_scale(self, rng):
        gt = sv.ImageF.from_array(
            rng.random((12, 12, 3), dtype=np.float32) * 0.5 + 0.1, sv.SCALAR
        )
        pred = gt.with_data(gt.data * 2.0)
        out = sv.scale_invariant_normalize(pred, gt)
        assert np.abs(out.data - gt.data).max() <= 1e-6

    def test_identity_when_equal(self, rng):
        gt = sv.ImageF.from_array(rng.random((12, 12, 3), dtype=np.float32), sv.SCALAR)
        out = sv.scale_invariant_normalize(gt, gt)
        assert np.abs(out.data - gt.data).max() <= 1e-7

    def test_per_channel_ratios(self):
        pred = np.zeros((4, 4, 3), np.float32)
        pred[:, :, 0] = 0.2
        pred[:, :, 1] = 0.4
        pred[:, :, 2] = 0.1
        gt = np.full((4, 4, 3), 0.4, np.float32)
        out = sv.scale_invariant_normalize(
            sv.ImageF.from_array(pred, sv.SCALAR),
            sv.ImageF.from_array(gt, sv.SCALAR),
        )
        assert np.allclose(out.data, 0.4, atol=1e-7)

    def test_near_zero_mean_rejected(self):
        pred = scalar_img(0.0, (4, 4))
        with pytest.raises(ValueError):
            sv.scale_invariant_normalize(pred, scalar_img(0.5, (4, 4)))

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.05, 20.0))
    def test_si_psnr_invariant_to_scale(self, k):
        rng = np.random.default_rng(11)
        gt = sv.ImageF.from_array(
            (rng.random((10, 10, 3)) * 0.5 + 0.25).astype(np.float32), sv.SCALAR
        )
        pred = gt.with_data(np.asarray(gt.data, np.float64) * k)
        base = sv.si_psnr(gt, gt)
        scaled = sv.si_psnr(pred, gt)
        assert abs(base - scaled) <= 1e-5


class TestFlipL1:
    def test_identical_zero(self, rng):
        a = srgb_img(rng.random((8, 8, 3)))
        assert sv.flip_l1(a, a) == 0.0

    def test_black_white_one_third(self):
        black = srgb_img(np.zeros((8, 8, 3)))
        white = srgb_img(np.ones((8, 8, 3)))
        assert abs(sv.flip_l1(black, white) - 1.0 / 3.0) < 1e-9

    def test_one_step_gray_small_positive(self):
        a = srgb_img(np.full((8, 8, 3), 128 / 255))
        b = srgb_img(np.full((8, 8, 3), 129 / 255))
        loss = sv.flip_l1(a, b)
        assert 0.0 < loss < 1.0 / 3.0


@pytest.fixture(scope="module")
def gt_view():
    sc = quad_scene(64)
    return pattern_views(sc.mesh, [sc.camera]).views[0]


class TestTrainingLoss:

    def test_zero_at_ground_truth(self, gt_view):
        total, terms = sv.training_loss(gt_view, gt_view)
        assert total == 0.0
        assert all(v == 0.0 for v in terms.values())

    def test_default_weights_published(self):
        w = sv.LossWeights()
        assert (w.alpha_b, w.alpha_m, w.alpha_r, w.lambda_b, w.lambda_r) == (
            1.0, 2.0, 0.5, 0.5, 0.5,
        )

    def test_metallic_offset_linear_term(self, gt_view):
        a = dataclasses.replace(gt_view, metallic=scalar_img(0.3, (64, 64)))
        b = dataclasses.replace(gt_view, metallic=scalar_img(0.4, (64, 64)))
        total, terms = sv.training_loss(b, a)
        assert abs(total - 2.0 * terms["metallic_l1"]) <= 1e-12
        assert abs(total - 0.2) <= 1e-6

    def test_linear_in_each_weight(self, gt_view, rng):
        noisy = dataclasses.replace(
            gt_view,
            roughness=gt_view.roughness.with_data(
                np.clip(gt_view.roughness.data + 0.05, 0, 1)
            ),
            metallic=gt_view.metallic.with_data(
                np.clip(gt_view.metallic.data + 0.1, 0, 1)
            ),
        )
        base, terms = sv.training_loss(noisy, gt_view)
        doubled, _ = sv.training_loss(
            noisy, gt_view, sv.LossWeights(alpha_m=4.0)
        )
        assert abs(doubled - base - 2.0 * terms["metallic_l1"]) <= 1e-12

    def test_perceptual_hook(self, gt_view):
        total_zero, _ = sv.training_loss(gt_view, gt_view)
        total_hooked, terms = sv.training_loss(
            gt_view, gt_view, perceptual=lambda a, b: 1.0
        )
        # hook contributes alpha_b*lambda_b + alpha_r*lambda_r = 0.75
        assert abs(total_hooked - 0.75) <= 1e-12
        assert terms["basecolor_perceptual"] == 1.0

    def test_nonnegative(self, gt_view, rng):
        noisy = dataclasses.replace(
            gt_view,
            basecolor=gt_view.basecolor.with_data(
                np.clip(
                    gt_view.basecolor.data
                    + rng.normal(0, 0.1, gt_view.basecolor.data.shape), 0, 1,
                )
            ),
        )
        total, _ = sv.training_loss(noisy, gt_view)
        assert total >= 0.0


class TestFlickerMetric:
    def _static_sequence(self, n=4, res=64):
        sc = quad_scene(res)
        g = sv.rasterize_gbuffer(sc.mesh, sc.camera)
        rng = np.random.default_rng(5)
        frame = sv.ImageF.from_array(rng.random((res, res, 3), dtype=np.float32), sv.SRGB)
        return [frame] * n, [sc.camera] * n, [g.depth] * n

    def test_static_identical_frames_zero(self):
        frames, cams, depths = self._static_sequence()
        report = sv.flicker_metric(frames, cams, depths)
        assert report.total == 0.0
        assert all(p == 0.0 for p in report.per_pair)
        assert all(v > 0.99 for v in report.valid_fraction)

    def test_prepending_duplicate_adds_zero_pair(self):
        frames, cams, depths = self._static_sequence(3)
        base = sv.flicker_metric(frames, cams, depths)
        ext = sv.flicker_metric(
            [frames[0]] + frames, [cams[0]] + cams, [depths[0]] + depths
        )
        assert len(ext.per_pair) == len(base.per_pair) + 1
        assert ext.per_pair[0] == 0.0
        assert abs(ext.total - base.total) <= 1e-12

    def test_consistent_warp_pair_zero(self):
        # frame 2 built by warping frame 1: the pair scores zero on the
        # valid set by construction
        sc = quad_scene(64)
        cams = sv.orbit_cameras(sc.orbit(2))
        g0 = sv.rasterize_gbuffer(sc.mesh, cams[0])
        g1 = sv.rasterize_gbuffer(sc.mesh, cams[1])
        rng = np.random.default_rng(6)
        f0 = sv.ImageF.from_array(rng.random((64, 64, 3), dtype=np.float32), sv.SRGB)
        warped = sv.warp_view(f0, cams[0], g0.depth, cams[1], g1.depth)
        f1 = warped.image
        report = sv.flicker_metric([f0, f1], cams[:2], [g0.depth, g1.depth])
        assert report.per_pair[0] <= 1e-7

    def test_noise_scores_higher(self):
        sc = quad_scene(64)
        cams = sv.orbit_cameras(sc.orbit(3))
        gs = [sv.rasterize_gbuffer(sc.mesh, c) for c in cams]
        views = pattern_views(sc.mesh, cams)
        clean = [v.basecolor for v in views.views]
        rng = np.random.default_rng(9)
        noisy = [
            f.with_data(np.clip(f.data + rng.normal(0, 0.05, f.data.shape), 0, 1))
            for f in clean
        ]
        depths = [g.depth for g in gs]
        clean_total = sv.flicker_metric(clean, cams, depths).total
        noisy_total = sv.flicker_metric(noisy, cams, depths).total
        assert clean_total < noisy_total

    def test_threaded_matches_serial(self):
        sc = quad_scene(64)
        cams = sv.orbit_cameras(sc.orbit(4))
        gs = [sv.rasterize_gbuffer(sc.mesh, c) for c in cams]
        frames = [v.basecolor for v in pattern_views(sc.mesh, cams).views]
        depths = [g.depth for g in gs]
        serial = sv.flicker_metric(frames, cams, depths, threads=1)
        threaded = sv.flicker_metric(frames, cams, depths, threads=3)
        assert serial.per_pair == threaded.per_pair
        assert serial.valid_fraction == threaded.valid_fraction

    def test_length_validation(self):
        frames, cams, depths = self._static_sequence(1)
        with pytest.raises(ValueError):
            sv.flicker_metric(frames, cams, depths)
        with pytest.raises(ValueError):
            sv.flicker_metric(frames * 2, cams, depths * 2)
