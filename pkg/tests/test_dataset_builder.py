import logging

import numpy as np
import pytest

from src.generators.dataset_builder import build_dynamic_pairs, build_synthetic_pairs, merge_static_gt, triangle_weight
from src.generators.sequence_generator import ExposureSchedule, synthesize_sequence
from src.imaging.frames import LdrFrame, RadianceFrame
from src.imaging.radiometry import linear_to_ldr


def render_stack(radiance, exposures, copies=1):
    return [(t, [LdrFrame(linear_to_ldr(radiance, t), t) for _ in range(copies)]) for t in exposures]


def make_sequence(rng, length, preset="2exp", size=4):
    hdr = [RadianceFrame(rng.uniform(0, 1, size=(size, size, 3))) for _ in range(length)]
    return synthesize_sequence(hdr, ExposureSchedule.from_preset(preset), name="toy")


class TestTriangleWeight:
    def test_values(self):
        np.testing.assert_allclose(triangle_weight(np.array([0.0, 0.25, 0.5, 1.0])), [0.0, 0.5, 1.0, 0.0])


class TestMergeStaticGt:
    def test_noise_free_stack_is_exact(self, rng):
        radiance = rng.uniform(0.01, 2.0, size=(16, 16, 3))
        merged = merge_static_gt(render_stack(radiance, [0.25, 1.0, 4.0]))
        np.testing.assert_allclose(merged.pixels, radiance, atol=1e-4)

    def test_duplicate_frames_match_single_frame(self, rng):
        radiance = rng.uniform(0.01, 2.0, size=(8, 8, 3))
        single = merge_static_gt(render_stack(radiance, [0.25, 4.0], copies=1))
        double = merge_static_gt(render_stack(radiance, [0.25, 4.0], copies=2))
        np.testing.assert_array_equal(single.pixels, double.pixels)

    def test_fully_saturated_pixel_uses_fallback(self):
        radiance = np.full((1, 1, 3), 100.0)
        merged = merge_static_gt(render_stack(radiance, [0.25, 4.0]))
        assert np.isfinite(merged.pixels).all()
        np.testing.assert_allclose(merged.pixels, 1.0 / 0.25)

    def test_requires_two_exposures(self, rng):
        radiance = rng.uniform(0, 1, size=(4, 4, 3))
        with pytest.raises(ValueError):
            merge_static_gt(render_stack(radiance, [1.0], copies=3))

    def test_rejects_mismatched_exposure(self, rng):
        radiance = rng.uniform(0, 1, size=(4, 4, 3))
        stacks = render_stack(radiance, [0.25, 4.0])
        stacks[0] = (0.5, stacks[0][1])
        with pytest.raises(ValueError):
            merge_static_gt(stacks)


class TestDynamicPairs:
    def test_stride_one_and_two_windows(self, rng):
        sequence = make_sequence(rng, 11)
        gt = RadianceFrame(np.ones((4, 4, 3)))
        pairs = build_dynamic_pairs(sequence, 5, gt, strides=(1, 2))
        assert [p.source_indices for p in pairs] == [[3, 4, 5, 6, 7], [1, 3, 5, 7, 9]]
        assert all(p.target is gt for p in pairs)
        assert pairs[0].reference.exposure_t == sequence.frames[5].exposure_t
        assert pairs[0].reference_role == sequence.role_at(5)

    def test_stride_two_doubles_pairs(self, rng):
        sequence = make_sequence(rng, 11)
        gt = RadianceFrame(np.ones((4, 4, 3)))
        one = build_dynamic_pairs(sequence, 5, gt, strides=(1,))
        both = build_dynamic_pairs(sequence, 5, gt, strides=(1, 2))
        assert len(both) == 2 * len(one)

    def test_insufficient_neighbours_are_skipped(self, rng, caplog):
        sequence = make_sequence(rng, 8)
        gt = RadianceFrame(np.ones((4, 4, 3)))
        with caplog.at_level(logging.WARNING):
            pairs = build_dynamic_pairs(sequence, 2, gt, strides=(1, 2))
        assert [p.source_indices for p in pairs] == [[0, 1, 2, 3, 4]]
        assert "stride 2" in caplog.text

    def test_three_exposure_window(self, rng):
        sequence = make_sequence(rng, 10, preset="3exp")
        gt = RadianceFrame(np.ones((4, 4, 3)))
        pairs = build_dynamic_pairs(sequence, 4, gt, strides=(1,))
        assert pairs[0].source_indices == [1, 2, 3, 4, 5, 6, 7]
        assert pairs[0].center_index == 3


class TestSyntheticPairs:
    def test_all_valid_centres(self, rng):
        sequence = make_sequence(rng, 9)
        pairs = build_synthetic_pairs(sequence, strides=(1, 2))
        assert len(pairs) == (9 - 4) + (9 - 8)
        first = pairs[0]
        np.testing.assert_array_equal(first.target.pixels, sequence.targets[2].pixels)

    def test_requires_targets(self, rng):
        sequence = make_sequence(rng, 6)
        sequence.targets = None
        with pytest.raises(ValueError):
            build_synthetic_pairs(sequence)
