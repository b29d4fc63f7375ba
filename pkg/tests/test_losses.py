import logging
import math

import numpy as np
import pytest
import torch

from src.imaging.frames import RadianceFrame
from src.imaging.radiometry import inverse_mu_law, mu_law
from src.networks import losses
from src.networks.losses import (
    RandomFeatures, build_perceptual_extractor, coarse_loss, finetune_loss, masked_l1, perceptual_loss, refine_loss,
)


class TestCoarseLoss:
    def test_scalar_example(self):
        expected = abs(math.log(501) - math.log(1001)) / math.log(5001)
        assert float(coarse_loss(torch.tensor([0.1], dtype=torch.float64), torch.tensor([0.2], dtype=torch.float64))) == pytest.approx(expected, rel=1e-6)
        assert expected == pytest.approx(0.0813, abs=1e-4)

    def test_identical_is_zero(self, rng):
        h = torch.from_numpy(rng.uniform(0, 10, size=(2, 3, 4, 4)))
        assert float(coarse_loss(h, h)) == 0.0

    def test_black_against_unit(self):
        assert float(coarse_loss(torch.zeros(1, 3, 2, 2), torch.ones(1, 3, 2, 2))) == pytest.approx(1.0)

    def test_accepts_frames(self, rng):
        a = RadianceFrame(rng.uniform(0, 1, size=(4, 4, 3)))
        b = RadianceFrame(rng.uniform(0, 1, size=(4, 4, 3)))
        expected = np.mean(np.abs(mu_law(a.pixels) - mu_law(b.pixels)))
        assert float(coarse_loss(a, b)) == pytest.approx(expected, rel=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            coarse_loss(torch.zeros(1, 3, 2, 2), torch.zeros(1, 3, 2, 3))


class TestRefineLoss:
    def test_uniform_gap_with_empty_mask(self, rng):
        tonemapped = torch.from_numpy(rng.uniform(0.1, 0.8, size=(2, 3, 4, 4)))
        delta = 0.05
        gt = inverse_mu_law(tonemapped)
        pred = inverse_mu_law(tonemapped + delta)
        loss = refine_loss(pred, gt, torch.zeros(2, 1, 4, 4, dtype=torch.float64))
        assert float(loss) == pytest.approx(delta, rel=1e-9)

    def test_mask_normaliser_broadcasts_over_channels(self):
        pred_t = torch.ones(1, 3, 2, 2)
        gt_t = torch.zeros(1, 3, 2, 2)
        mask = torch.full((1, 1, 2, 2), 0.5)
        assert float(masked_l1(pred_t, gt_t, mask)) == pytest.approx(12.0 / 6.0)

    def test_fully_well_exposed_sample_is_skipped(self, caplog):
        pred = torch.full((2, 3, 2, 2), 0.5)
        gt = torch.full((2, 3, 2, 2), 0.2)
        mask = torch.stack([torch.ones(1, 2, 2), torch.zeros(1, 2, 2)])
        with caplog.at_level(logging.WARNING):
            partial = refine_loss(pred, gt, mask)
        assert any("적정 노출" in r.message for r in caplog.records)
        only_second = refine_loss(pred[1:], gt[1:], mask[1:])
        assert float(partial) == pytest.approx(float(only_second))

        everything_masked = refine_loss(pred, gt, torch.ones(2, 1, 2, 2))
        assert float(everything_masked) == 0.0

    def test_mask_shape_check(self):
        with pytest.raises(ValueError):
            refine_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 4), torch.zeros(1, 1, 2, 2))

    def test_pred_gradients(self, rng):
        gt = torch.from_numpy(rng.uniform(0.1, 3, size=(1, 3, 4, 4)))
        mask = torch.from_numpy(rng.uniform(0, 0.9, size=(1, 1, 4, 4)))
        pred = torch.from_numpy(rng.uniform(0.1, 3, size=(1, 3, 4, 4))).requires_grad_(True)
        assert torch.autograd.gradcheck(lambda p: refine_loss(p, gt, mask), (pred,), eps=1e-6, atol=1e-6)

    def test_finetune_adds_coarse_term(self, rng):
        pred = torch.from_numpy(rng.uniform(0.1, 3, size=(1, 3, 4, 4)))
        gt = torch.from_numpy(rng.uniform(0.1, 3, size=(1, 3, 4, 4)))
        coarse = torch.from_numpy(rng.uniform(0.1, 3, size=(1, 3, 4, 4)))
        mask = torch.zeros(1, 1, 4, 4, dtype=torch.float64)
        expected = float(refine_loss(pred, gt, mask)) + float(coarse_loss(coarse, gt))
        assert float(finetune_loss(pred, gt, mask, coarse)) == pytest.approx(expected)


class TestPerceptual:
    def test_identical_inputs_give_zero(self, rng):
        extractor = build_perceptual_extractor("random")
        t = torch.from_numpy(rng.uniform(0, 1, size=(1, 3, 16, 16))).float()
        assert float(perceptual_loss(t, t, extractor)) == 0.0

    def test_different_inputs_are_positive(self, rng):
        extractor = RandomFeatures()
        a = torch.from_numpy(rng.uniform(0, 1, size=(1, 3, 16, 16))).float()
        b = torch.from_numpy(rng.uniform(0, 1, size=(1, 3, 16, 16))).float()
        assert float(perceptual_loss(a, b, extractor)) > 0

    def test_random_extractor_is_seeded_and_frozen(self):
        a, b = RandomFeatures(seed=3), RandomFeatures(seed=3)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)
            assert not pa.requires_grad

    def test_feature_shapes(self):
        shapes = [tuple(f.shape) for f in RandomFeatures()(torch.zeros(1, 3, 16, 16))]
        assert shapes == [(1, 8, 16, 16), (1, 16, 8, 8), (1, 32, 4, 4)]

    def test_layer_terms_are_element_means(self):
        class TwoLevels(torch.nn.Module):
            def forward(self, x):
                return [x, x[:, :, ::2, ::2]]

        a = torch.zeros(1, 3, 8, 8, dtype=torch.float64)
        b = torch.full((1, 3, 8, 8), 0.5, dtype=torch.float64)
        assert float(perceptual_loss(a, b, TwoLevels())) == pytest.approx(1.0)

    def test_names(self):
        assert build_perceptual_extractor("none") is None
        assert isinstance(build_perceptual_extractor("random"), RandomFeatures)
        with pytest.raises(ValueError):
            build_perceptual_extractor("resnet")

    def test_vgg_failure_falls_back(self, monkeypatch, caplog):
        def unavailable():
            raise RuntimeError("no weights")

        monkeypatch.setattr(losses, "VGG16Features", unavailable)
        with caplog.at_level(logging.WARNING):
            extractor = build_perceptual_extractor("vgg16")
        assert isinstance(extractor, RandomFeatures)
        assert any("VGG16" in r.message for r in caplog.records)


@pytest.mark.parametrize("seed", range(100))
def test_refine_l1_matches_scalar_evaluation(seed):
    rng = np.random.default_rng(seed)
    pred = rng.uniform(0, 3, size=(1, 3, 4, 4))
    gt = rng.uniform(0, 3, size=(1, 3, 4, 4))
    mask = rng.uniform(0, 1, size=(1, 1, 4, 4))
    numerator = denominator = 0.0
    for c in range(3):
        for y in range(4):
            for x in range(4):
                tp = math.log1p(5000 * pred[0, c, y, x]) / math.log1p(5000)
                tg = math.log1p(5000 * gt[0, c, y, x]) / math.log1p(5000)
                numerator += abs(tp - tg)
                denominator += 1.0 - mask[0, 0, y, x]
    loss = refine_loss(torch.from_numpy(pred), torch.from_numpy(gt), torch.from_numpy(mask))
    assert float(loss) == pytest.approx(numerator / denominator, abs=1e-6)
