import dataclasses

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from src.imaging.frames import LdrFrame, RadianceFrame
from src.networks.losses import refine_loss
from src.networks.refinenet import (
    DeformAlign, FeatureExtractor, PCDAlign, RefineArch, RefineNet, TemporalAttentionFusion, deformable_sample,
    extract_features, ldr_window_radiance, merge_output, pcd_align, refine_forward, temporal_attention_fuse,
)

from tests.conftest import central_difference_check, randomize_heads


def coarse_batch(rng, size=16, batch=1, dtype=torch.float64):
    coarse = torch.from_numpy(rng.uniform(0.1, 2.0, size=(batch, 3, 3, size, size))).to(dtype)
    reference = torch.from_numpy(rng.uniform(0.05, 0.95, size=(batch, 3, size, size))).to(dtype)
    return coarse, reference


def shift_offsets(channels, height, width, dx, dtype=torch.float64):
    offsets = torch.zeros(1, channels, height, width, dtype=dtype)
    offsets[:, 1::2] = dx
    return offsets


class TestDeformableSample:
    def test_zero_offsets_match_convolution(self, rng):
        feature = torch.from_numpy(rng.normal(size=(2, 4, 8, 8))).float()
        weight = torch.from_numpy(rng.normal(size=(4, 4, 3, 3))).float()
        bias = torch.from_numpy(rng.normal(size=4)).float()
        out = deformable_sample(feature, torch.zeros(2, 18, 8, 8), weight, bias)
        torch.testing.assert_close(out, F.conv2d(feature, weight, bias, padding=1), rtol=0, atol=1e-5)

    def test_integer_offset_is_shifted_gather(self, rng):
        feature = torch.from_numpy(rng.normal(size=(1, 4, 8, 8)))
        weight = torch.from_numpy(rng.normal(size=(4, 4, 3, 3)))
        out = deformable_sample(feature, shift_offsets(18, 8, 8, 1.0), weight)
        shifted = torch.zeros_like(feature)
        shifted[..., :-1] = feature[..., 1:]
        expected = F.conv2d(shifted, weight, padding=1)
        torch.testing.assert_close(out[..., 1:-1], expected[..., 1:-1], rtol=0, atol=1e-10)

    def test_offset_gradients(self, rng):
        feature = torch.from_numpy(rng.normal(size=(1, 2, 6, 6))).requires_grad_(True)
        magnitude = rng.uniform(0.2, 0.8, size=(1, 18, 6, 6)) * rng.choice([-1.0, 1.0], size=(1, 18, 6, 6))
        offsets = torch.from_numpy(magnitude).requires_grad_(True)
        weight = torch.from_numpy(rng.normal(size=(2, 2, 3, 3))).requires_grad_(True)
        assert torch.autograd.gradcheck(deformable_sample, (feature, offsets, weight), eps=1e-6, atol=1e-5)

    def test_shape_checks(self):
        weight = torch.zeros(4, 4, 3, 3)
        with pytest.raises(ValueError):
            deformable_sample(torch.zeros(1, 4, 8, 8), torch.zeros(1, 18, 4, 4), weight)
        with pytest.raises(ValueError):
            deformable_sample(torch.zeros(1, 4, 8, 8), torch.zeros(1, 10, 8, 8), weight)


class TestPCDAlign:
    def test_offsets_start_at_zero(self, rng):
        align = DeformAlign(8, 2)
        offsets = align.predict_offsets(torch.from_numpy(rng.normal(size=(1, 8, 6, 6))).float())
        assert torch.all(offsets == 0)

    def test_predicted_offsets_are_bounded(self):
        align = DeformAlign(8, 2)
        with torch.no_grad():
            align.offset_head.bias.fill_(100.0)
        offsets = align.predict_offsets(torch.zeros(1, 8, 6, 10))
        assert float(offsets.abs().max()) == pytest.approx(5.0)

    def test_oracle_offsets_undo_global_shift(self, rng):
        torch.manual_seed(0)
        pcd = PCDAlign(8, 2).double()
        channels = 2 * 2 * 9
        ref = [torch.from_numpy(rng.normal(size=(1, 8, s, s))) for s in (64, 32, 16)]
        nbr = [torch.roll(level, shifts=shift, dims=-1) for level, shift in zip(ref, (4, 2, 1))]
        oracle = [
            shift_offsets(channels, 16, 16, 1.0),
            shift_offsets(channels, 32, 32, 2.0),
            shift_offsets(channels, 64, 64, 4.0),
            shift_offsets(channels, 64, 64, 0.0),
        ]
        identity = [torch.zeros_like(o) for o in oracle]
        with torch.no_grad():
            aligned = pcd(nbr, ref, oracle)
            expected = pcd(ref, ref, identity)
        margin = 16
        torch.testing.assert_close(aligned[..., margin:-margin], expected[..., margin:-margin],
                                   rtol=1e-9, atol=1e-9)

    def test_pyramid_checks(self):
        pcd = PCDAlign(8, 2)
        levels = [torch.zeros(1, 8, s, s) for s in (8, 4, 2)]
        with pytest.raises(ValueError):
            pcd(levels[:2], levels[:2])
        with pytest.raises(ValueError):
            pcd(levels, [torch.zeros(1, 8, 8, 8), levels[1], torch.zeros(1, 8, 3, 3)])


class TestTemporalAttentionFusion:
    def test_unit_attention_is_plain_fusion(self, rng):
        fusion = TemporalAttentionFusion(8)
        aligned = torch.from_numpy(rng.normal(size=(2, 3, 8, 4, 4))).float()
        expected = fusion.act(fusion.fusion(aligned.reshape(2, 24, 4, 4)))
        torch.testing.assert_close(fusion(aligned, torch.ones(1, 3, 1, 1, 1)), expected)

    def test_zero_attention_on_neighbours_ignores_them(self, rng):
        fusion = TemporalAttentionFusion(8)
        aligned = torch.from_numpy(rng.normal(size=(1, 3, 8, 4, 4))).float()
        attention = torch.tensor([0.0, 1.0, 0.0]).view(1, 3, 1, 1, 1)
        changed = aligned.clone()
        changed[:, 0] += 5.0
        changed[:, 2] -= 3.0
        torch.testing.assert_close(fusion(aligned, attention), fusion(changed, attention))

    def test_attention_maps_are_probabilities(self, rng):
        fusion = TemporalAttentionFusion(8)
        maps = fusion.attention_maps(torch.from_numpy(rng.normal(size=(1, 3, 8, 4, 4))).float())
        assert maps.shape == (1, 3, 8, 4, 4)
        assert torch.all((maps > 0) & (maps < 1))


class TestMergeOutput:
    def test_mask_extremes(self, rng):
        coarse = torch.from_numpy(rng.uniform(0, 3, size=(1, 3, 4, 4)))
        refined = torch.from_numpy(rng.uniform(0, 3, size=(1, 3, 4, 4)))
        ones = torch.ones(1, 1, 4, 4, dtype=torch.float64)
        torch.testing.assert_close(merge_output(coarse, refined, ones), coarse, rtol=0, atol=0)
        torch.testing.assert_close(merge_output(coarse, refined, 0 * ones), refined, rtol=0, atol=0)

    def test_scalar(self):
        out = merge_output(torch.tensor(2.0), torch.tensor(4.0), torch.tensor(0.3))
        assert float(out) == pytest.approx(3.4)


class TestFeatureExtractor:
    def test_pyramid_shapes(self):
        levels = FeatureExtractor(8, 1)(torch.zeros(2, 3, 16, 16))
        assert [tuple(level.shape) for level in levels] == [(2, 8, 16, 16), (2, 8, 8, 8), (2, 8, 4, 4)]

    def test_weights_shared_across_frames(self, tiny_refine_arch, rng):
        model = RefineNet(tiny_refine_arch).double()
        frames = torch.from_numpy(rng.uniform(0, 2, size=(3, 3, 8, 8)))
        with torch.no_grad():
            batched = model.extract(frames)
            for k in range(3):
                single = model.extract(frames[k:k + 1])
                for a, b in zip(single, batched):
                    torch.testing.assert_close(a[0], b[k])

    def test_frame_level_features(self, tiny_refine_arch, rng):
        model = RefineNet(tiny_refine_arch)
        levels = extract_features(model, RadianceFrame(rng.uniform(0, 1, size=(8, 8, 3)).astype(np.float32)))
        assert [level.shape for level in levels] == [(8, 8, 8), (4, 4, 8), (2, 2, 8)]


class TestRefineNet:
    def test_output_shapes_with_padding(self, tiny_refine_arch, rng):
        model = RefineNet(tiny_refine_arch).double()
        coarse, reference = coarse_batch(rng, size=10, batch=2)
        output = model(coarse, reference, roles=["low", "high"])
        assert output.radiance.shape == (2, 3, 10, 10)
        assert output.mask.shape == (2, 1, 10, 10)
        assert torch.isfinite(output.radiance).all() and torch.all(output.refined >= 0)

    def test_requires_roles_or_mask(self, tiny_refine_arch, rng):
        model = RefineNet(tiny_refine_arch).double()
        coarse, reference = coarse_batch(rng, size=8)
        with pytest.raises(ValueError):
            model(coarse, reference)
        with pytest.raises(ValueError):
            model(coarse[:, :2], reference, roles=["low"])

    def test_well_exposed_reference_keeps_coarse(self, tiny_refine_arch, rng):
        model = RefineNet(tiny_refine_arch)
        window = [RadianceFrame(rng.uniform(0.1, 2, size=(8, 8, 3))) for _ in range(3)]
        reference = LdrFrame(rng.uniform(0.3, 0.6, size=(8, 8, 3)), 1.0)
        out = refine_forward(model, window, reference, "middle")
        np.testing.assert_allclose(out.pixels, window[1].pixels, rtol=1e-6)

    @pytest.mark.parametrize("use_alignment,use_attention", [(False, True), (True, False), (False, False)])
    def test_ablations(self, rng, use_alignment, use_attention):
        arch = RefineArch(nf=8, deform_groups=2, decoder_blocks=1,
                          use_alignment=use_alignment, use_attention=use_attention)
        model = RefineNet(arch).double()
        assert (model.align is None) != use_alignment
        assert hasattr(model.fusion, "att1") == use_attention
        coarse, reference = coarse_batch(rng, size=8)
        output = model(coarse, reference, mask=torch.zeros(1, 1, 8, 8, dtype=torch.float64))
        assert output.radiance.shape == (1, 3, 8, 8)

    def test_arch_validation(self):
        with pytest.raises(ValueError):
            RefineArch(nf=10, deform_groups=4)
        assert RefineArch(nf=64, deform_groups=8).scaled(0.25).nf == 16

    def test_no_dead_branches(self, tiny_refine_arch, rng):
        torch.manual_seed(0)
        model = RefineNet(tiny_refine_arch).double()
        coarse, reference = coarse_batch(rng, size=16)
        gt = torch.from_numpy(rng.uniform(0.1, 2.0, size=(1, 3, 16, 16)))
        mask = torch.zeros(1, 1, 16, 16, dtype=torch.float64)
        optimizer = torch.optim.Adam(model.parameters(), lr=1e-3)

        for _ in range(2):
            optimizer.zero_grad()
            refine_loss(model(coarse, reference, mask=mask).radiance, gt, mask).backward()
            optimizer.step()

        for name, p in model.named_parameters():
            assert p.grad is not None, name
            assert float(p.grad.abs().sum()) > 0, name

    def test_end_to_end_parameter_gradients(self, tiny_refine_arch, rng):
        torch.manual_seed(0)
        model = RefineNet(tiny_refine_arch).double()
        randomize_heads(model, scale=0.05)
        coarse, reference = coarse_batch(rng, size=16)
        gt = torch.from_numpy(rng.uniform(0.1, 2.0, size=(1, 3, 16, 16)))
        mask = torch.from_numpy(rng.uniform(0, 0.5, size=(1, 1, 16, 16)))

        def loss():
            return refine_loss(model(coarse, reference, mask=mask).radiance, gt, mask)

        central_difference_check(loss, model.parameters(), samples=3)


@pytest.mark.parametrize("seed", range(100))
def test_merge_matches_scalar_evaluation(seed):
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0, 4, size=(1, 3, 4, 4))
    refined = rng.uniform(0, 4, size=(1, 3, 4, 4))
    mask = rng.uniform(0, 1, size=(1, 1, 4, 4))
    out = merge_output(torch.from_numpy(coarse), torch.from_numpy(refined), torch.from_numpy(mask)).numpy()
    for c in range(3):
        for y in range(4):
            for x in range(4):
                m = mask[0, 0, y, x]
                assert out[0, c, y, x] == pytest.approx(m * coarse[0, c, y, x] + (1 - m) * refined[0, c, y, x],
                                                        abs=1e-6)


def test_attention_fusion_gradients(rng):
    torch.manual_seed(0)
    fusion = TemporalAttentionFusion(4).double()
    aligned = torch.from_numpy(rng.normal(size=(1, 3, 4, 4, 4))).requires_grad_(True)
    assert torch.autograd.gradcheck(fusion, (aligned,), eps=1e-6, atol=1e-6)


class TestModelEntryPoints:
    def test_pcd_and_fusion_through_model(self, tiny_refine_arch, rng):
        model = RefineNet(tiny_refine_arch).double()
        coarse = torch.from_numpy(rng.uniform(0.1, 2, size=(3, 3, 8, 8)))
        with torch.no_grad():
            pyramids = [model.extract(coarse[k:k + 1]) for k in range(3)]
            aligned = [pcd_align(model, pyramids[0], pyramids[1]), pyramids[1][0],
                       pcd_align(model, pyramids[2], pyramids[1])]
            fused = temporal_attention_fuse(model, aligned)
        assert fused.shape == (1, 8, 8, 8)
        with pytest.raises(ValueError):
            temporal_attention_fuse(model, aligned[:2])

    def test_pcd_requires_alignment(self, rng):
        model = RefineNet(RefineArch(nf=8, deform_groups=2, decoder_blocks=1, use_alignment=False))
        levels = [torch.zeros(1, 8, s, s) for s in (8, 4, 2)]
        with pytest.raises(ValueError):
            pcd_align(model, levels, levels)


class TestLdrWindowInput:
    def test_exposure_matched_radiance(self):
        ldr = torch.full((1, 3, 3, 4, 4), 0.5, dtype=torch.float64)
        exposures = torch.tensor([[0.25, 4.0, 0.25]], dtype=torch.float64)
        stack = ldr_window_radiance(ldr, exposures)
        assert stack.shape == (1, 3, 3, 4, 4)
        for k, t in enumerate((0.25, 4.0, 0.25)):
            torch.testing.assert_close(stack[0, k], torch.full((3, 4, 4), 0.5 ** 2.2 / t, dtype=torch.float64))

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            ldr_window_radiance(torch.zeros(1, 5, 3, 4, 4), torch.ones(1, 5))
        with pytest.raises(ValueError):
            ldr_window_radiance(torch.zeros(1, 3, 3, 4, 4), torch.ones(1, 2))

    def test_refine_net_runs_on_ldr_window(self, tiny_refine_arch, rng):
        torch.manual_seed(0)
        model = RefineNet(dataclasses.replace(tiny_refine_arch, use_coarse=False)).double()
        ldr = torch.from_numpy(rng.uniform(0.05, 0.95, size=(1, 3, 3, 8, 8)))
        exposures = torch.tensor([[0.25, 4.0, 0.25]], dtype=torch.float64)
        with torch.no_grad():
            output = model(ldr_window_radiance(ldr, exposures), ldr[:, 1], roles=["high"])
        assert output.radiance.shape == (1, 3, 8, 8)
        assert torch.isfinite(output.radiance).all()
