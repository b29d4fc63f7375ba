import math

import cv2
import numpy as np
import pytest
import torch

from src.imaging.frames import FlowField, LdrFrame, RadianceFrame
from src.imaging.geometry import (
    SimilarityTransform, align_window, backward_warp, backward_warp_tensor, estimate_similarity,
    random_global_motion, warp_similarity,
)


def textured_frame(size=96, seed=0, exposure_t=1.0):
    rng = np.random.default_rng(seed)
    noise = rng.uniform(0, 1, size=(size, size)).astype(np.float32)
    blurred = cv2.GaussianBlur(noise, (0, 0), 2.0)
    blurred = (blurred - blurred.min()) / (blurred.max() - blurred.min())
    pixels = 0.1 + 0.8 * np.repeat(blurred[:, :, None], 3, axis=2)
    return LdrFrame(pixels.astype(np.float64), exposure_t=exposure_t)


class TestBackwardWarp:
    def test_zero_flow_is_identity(self, rng):
        frame = RadianceFrame(rng.uniform(0, 5, size=(7, 9, 3)))
        warped = backward_warp(frame, FlowField.zeros(7, 9))
        np.testing.assert_allclose(warped.pixels, frame.pixels, atol=1e-7)

    def test_integer_shift_matches_gather(self, rng):
        pixels = rng.uniform(0, 1, size=(6, 8, 3))
        flow = np.zeros((6, 8, 2))
        flow[:, :, 0] = 1.0
        warped = backward_warp(RadianceFrame(pixels), FlowField(flow)).pixels
        np.testing.assert_allclose(warped[:, :-1], pixels[:, 1:], atol=1e-12)
        # 범위 밖 좌표는 가장자리 값
        np.testing.assert_allclose(warped[:, -1], pixels[:, -1], atol=1e-12)

    def test_vertical_shift(self, rng):
        pixels = rng.uniform(0, 1, size=(6, 8, 3))
        flow = np.zeros((6, 8, 2))
        flow[:, :, 1] = -2.0
        warped = backward_warp(RadianceFrame(pixels), FlowField(flow)).pixels
        np.testing.assert_allclose(warped[2:], pixels[:-2], atol=1e-12)

    def test_half_pixel_is_average(self):
        pixels = np.zeros((1, 4, 1))
        pixels[0, :, 0] = [0.0, 1.0, 3.0, 7.0]
        flow = np.zeros((1, 4, 2))
        flow[:, :, 0] = 0.5
        warped = backward_warp(RadianceFrame(pixels), FlowField(flow)).pixels
        np.testing.assert_allclose(warped[0, :3, 0], [0.5, 2.0, 5.0], atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            backward_warp(RadianceFrame(np.zeros((4, 4, 3))), FlowField.zeros(4, 5))
        with pytest.raises(ValueError):
            backward_warp_tensor(torch.zeros(1, 3, 4, 4), torch.zeros(1, 2, 5, 4))

    def test_ldr_output_stays_in_range(self, rng):
        frame = LdrFrame(rng.uniform(0, 1, size=(5, 5, 3)), exposure_t=1.0)
        flow = FlowField(rng.uniform(-2, 2, size=(5, 5, 2)))
        warped = backward_warp(frame, flow)
        assert warped.pixels.min() >= 0 and warped.pixels.max() <= 1
        assert warped.exposure_t == frame.exposure_t

    def test_gradients_match_finite_differences(self):
        generator = torch.Generator().manual_seed(0)
        image = torch.rand(1, 2, 5, 6, dtype=torch.float64, generator=generator, requires_grad=True)
        # 정수 좌표(비미분점)를 피하는 분수 광류
        flow = (torch.rand(1, 2, 5, 6, dtype=torch.float64, generator=generator) * 0.8 + 0.1)
        flow.requires_grad_(True)
        assert torch.autograd.gradcheck(backward_warp_tensor, (image, flow), eps=1e-6, atol=1e-6, rtol=1e-3)


class TestSimilarityTransform:
    def test_inverse_composes_to_identity(self):
        transform = SimilarityTransform(scale=1.1, rotation=0.2, tx=3.0, ty=-1.5)
        assert transform.compose(transform.inverse()).is_identity()
        assert transform.inverse().compose(transform).is_identity()

    def test_from_matrix_round_trip(self):
        transform = SimilarityTransform(scale=0.9, rotation=-0.3, tx=1.0, ty=2.0)
        again = SimilarityTransform.from_matrix(transform.matrix())
        np.testing.assert_allclose(again.matrix(), transform.matrix(), atol=1e-12)

    def test_about_center_keeps_center_fixed(self):
        transform = SimilarityTransform.about_center(1.2, 0.4, center=(10.0, 20.0))
        point = transform.matrix() @ np.array([10.0, 20.0, 1.0])
        np.testing.assert_allclose(point, [10.0, 20.0], atol=1e-12)

    def test_rejects_non_positive_scale(self):
        with pytest.raises(ValueError):
            SimilarityTransform(scale=0.0)

    def test_identity_warp_is_exact(self, rng):
        frame = RadianceFrame(rng.uniform(0, 3, size=(5, 6, 3)))
        np.testing.assert_array_equal(warp_similarity(frame, SimilarityTransform.identity()).pixels, frame.pixels)

    def test_integer_translation(self, rng):
        pixels = rng.uniform(0, 1, size=(6, 6, 3))
        warped = warp_similarity(RadianceFrame(pixels), SimilarityTransform(tx=2.0)).pixels
        np.testing.assert_allclose(warped[:, 2:], pixels[:, :-2], atol=1e-12)


class TestEstimateSimilarity:
    def test_recovers_translation_across_exposures(self):
        src = textured_frame(exposure_t=1.0)
        truth = SimilarityTransform(tx=3.0, ty=-2.0)
        dst_radiance = warp_similarity(src, truth)
        # 같은 장면을 다른 노출로 재렌더링
        linear = dst_radiance.pixels ** 2.2 / 1.0
        dst = LdrFrame(np.clip((linear * 0.5) ** (1 / 2.2), 0, 1), exposure_t=0.5)
        estimate = estimate_similarity(src, dst, seed=0)
        assert not estimate.degenerate
        assert estimate.tx == pytest.approx(3.0, abs=0.3)
        assert estimate.ty == pytest.approx(-2.0, abs=0.3)
        assert estimate.scale == pytest.approx(1.0, abs=0.01)

    def test_recovers_small_rotation(self):
        src = textured_frame(size=128, seed=3)
        truth = SimilarityTransform.about_center(1.0, math.radians(2.0), center=(64.0, 64.0))
        dst = warp_similarity(src, truth)
        estimate = estimate_similarity(src, dst, seed=0)
        assert math.degrees(estimate.rotation) == pytest.approx(2.0, abs=0.3)

    def test_deterministic_for_seed(self):
        src = textured_frame(seed=5)
        dst = warp_similarity(src, SimilarityTransform(tx=1.5, ty=0.5))
        a = estimate_similarity(src, dst, seed=7)
        b = estimate_similarity(src, dst, seed=7)
        assert a == b

    def test_constant_images_are_degenerate(self):
        flat = LdrFrame(np.full((32, 32, 3), 0.5), exposure_t=1.0)
        estimate = estimate_similarity(flat, flat)
        assert estimate.degenerate
        assert estimate.is_identity()

    def test_align_window_reduces_misalignment(self):
        reference = textured_frame(seed=1)
        moved = warp_similarity(reference, SimilarityTransform(tx=-2.0, ty=1.0))
        aligned = align_window([moved, reference], reference_index=1)
        assert aligned[1] is reference
        interior = (slice(10, -10), slice(10, -10))
        before = np.abs(moved.pixels[interior] - reference.pixels[interior]).mean()
        after = np.abs(aligned[0].pixels[interior] - reference.pixels[interior]).mean()
        assert after < 0.25 * before


class TestRandomGlobalMotion:
    def test_shift_bounds_and_determinism(self, rng):
        frames = [RadianceFrame(rng.uniform(0, 1, size=(8, 8, 3))) for _ in range(4)]
        moved_a, transforms_a = random_global_motion(frames, max_shift=5.0, seed=3)
        moved_b, transforms_b = random_global_motion(frames, max_shift=5.0, seed=3)
        assert transforms_a == transforms_b
        for transform in transforms_a:
            assert math.hypot(transform.tx, transform.ty) <= 5.0 + 1e-12
            assert transform.scale == 1.0 and transform.rotation == 0.0
        for a, b in zip(moved_a, moved_b):
            np.testing.assert_array_equal(a.pixels, b.pixels)
