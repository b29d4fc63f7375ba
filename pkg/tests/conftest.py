import os

import numpy as np
import pytest
import torch

from src.generators.sequence_generator import ExposureSchedule, synthesize_sequence
from src.imaging.frames import RadianceFrame
from src.networks.coarsenet import CoarseArch, CoarseNet
from src.networks.refinenet import RefineArch, RefineNet


def pytest_collection_modifyitems(config, items):
    if os.getenv("HDRV_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set HDRV_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def central_difference_check(loss_fn, parameters, eps=1e-6, rtol=1e-3, atol=1e-8, samples=6, seed=0):
    """
    Compare autograd parameter gradients with central differences.

    Checks a few randomly chosen entries per parameter tensor.
    """
    parameters = [p for p in parameters if p.requires_grad]
    for p in parameters:
        p.grad = None
    loss_fn().backward()
    rng = np.random.default_rng(seed)
    for p in parameters:
        analytic = p.grad.detach().clone().flatten()
        flat = p.data.view(-1)
        for index in rng.choice(flat.numel(), size=min(samples, flat.numel()), replace=False):
            original = flat[index].item()
            with torch.no_grad():
                flat[index] = original + eps
                plus = loss_fn().item()
                flat[index] = original - eps
                minus = loss_fn().item()
                flat[index] = original
            numeric = (plus - minus) / (2 * eps)
            assert abs(numeric - analytic[index].item()) <= atol + rtol * max(abs(numeric), abs(analytic[index].item())), (
                f"gradient mismatch at {tuple(p.shape)}[{index}]: "
                f"numeric={numeric:.8g}, analytic={analytic[index].item():.8g}"
            )


def randomize_heads(model, scale=0.05, seed=0):
    """Replace zero-initialised prediction heads with small random weights."""
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, module in model.named_modules():
            if name.endswith("heads") or name.endswith("offset_head"):
                for p in module.parameters():
                    p.copy_(torch.randn(p.shape, generator=generator, dtype=p.dtype) * scale)


@pytest.fixture
def tiny_coarse_arch():
    return CoarseArch(period=2, flow_channels=[4, 6], weight_base=4, weight_depth=2)


@pytest.fixture
def tiny_refine_arch():
    return RefineArch(nf=8, deform_groups=2, extractor_blocks=1, decoder_blocks=1)


@pytest.fixture
def tiny_models(tiny_coarse_arch, tiny_refine_arch):
    torch.manual_seed(0)
    return CoarseNet(tiny_coarse_arch), RefineNet(tiny_refine_arch)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_sequence(rng, count=7, size=16, evs=(-2.0, 2.0), low=0.02, high=2.0):
    """Synthetic alternating-exposure sequence with per-frame ground truth."""
    hdr = [RadianceFrame(rng.uniform(low, high, size=(size, size, 3)).astype(np.float32)) for _ in range(count)]
    return synthesize_sequence(hdr, ExposureSchedule.from_ev(list(evs)), name="toy")


TINY_COARSE = {"period": 2, "flow_channels": [4, 6], "weight_base": 4, "weight_depth": 2}
TINY_REFINE = {"nf": 8, "deform_groups": 2, "extractor_blocks": 1, "decoder_blocks": 1}
