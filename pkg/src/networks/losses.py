#!/usr/bin/env python3
"""
src/networks/losses.py

📋 역할: 학습 손실
- coarse_loss: μ-law 톤매핑 영상 간 평균 L1
- refine_loss: 적정 노출이 아닌 픽셀 수로 정규화한 L1 + 3개 레이어 지각 손실
- 지각 특징 추출기: vgg16 (relu1_2 / relu2_2 / relu3_3), random (고정 난수 conv 피라미드), none
"""

import logging
from typing import List, Optional, Union

import torch
import torch.nn as nn

from config.settings import Settings
from src.imaging.frames import RadianceFrame, to_tensor
from src.imaging.radiometry import mu_law

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

PERCEPTUAL_EXTRACTORS = ("vgg16", "random", "none")

TensorOrFrame = Union[torch.Tensor, RadianceFrame]


def _as_tensor(value: TensorOrFrame) -> torch.Tensor:
    if isinstance(value, RadianceFrame):
        return to_tensor(value.pixels, torch.float64)
    return value


def coarse_loss(pred: TensorOrFrame, gt: TensorOrFrame, mu: float = Settings.MU) -> torch.Tensor:
    """mean |μ(pred) − μ(gt)|"""
    pred, gt = _as_tensor(pred), _as_tensor(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"예측과 GT 크기가 다릅니다: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    return (mu_law(pred, mu) - mu_law(gt, mu)).abs().mean()


# ========================================
# 지각 특징 추출기
# ========================================

class VGG16Features(nn.Module):
    """ImageNet 사전학습 VGG16 의 relu1_2, relu2_2, relu3_3 출력"""

    def __init__(self):
        super().__init__()
        from torchvision.models import VGG16_Weights, vgg16

        features = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features
        self.slices = nn.ModuleList([features[:4], features[4:9], features[9:16]])
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        outputs = []
        for block in self.slices:
            x = block(x)
            outputs.append(x)
        return outputs


class RandomFeatures(nn.Module):
    """고정 시드 난수 가중치 3단 conv 피라미드 (사전학습 모델이 없을 때의 대체 추출기)"""

    def __init__(self, channels=(8, 16, 32), seed: int = 0):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        self.slices = nn.ModuleList()
        in_channels = 3
        for index, out_channels in enumerate(channels):
            stride = 1 if index == 0 else 2
            layer = nn.Conv2d(in_channels, out_channels, 3, stride, 1)
            with torch.no_grad():
                bound = (1.0 / (in_channels * 9)) ** 0.5
                layer.weight.copy_(torch.empty_like(layer.weight).uniform_(-bound, bound, generator=generator))
                layer.bias.zero_()
            self.slices.append(nn.Sequential(layer, nn.ReLU()))
            in_channels = out_channels
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        outputs = []
        for block in self.slices:
            x = block(x)
            outputs.append(x)
        return outputs


def build_perceptual_extractor(name: str = Settings.PERCEPTUAL_EXTRACTOR) -> Optional[nn.Module]:
    """이름으로 지각 특징 추출기 생성 (none → None)"""
    name = (name or "none").lower()
    if name not in PERCEPTUAL_EXTRACTORS:
        raise ValueError(f"알 수 없는 지각 특징 추출기입니다: {name} (가능: {', '.join(PERCEPTUAL_EXTRACTORS)})")
    if name == "none":
        return None
    if name == "random":
        return RandomFeatures()
    try:
        return VGG16Features()
    except Exception as e:
        logger.warning(f"VGG16 가중치를 불러오지 못했습니다. 난수 추출기로 대체합니다: {str(e)}")
        return RandomFeatures()


# ========================================
# RefineNet 손실
# ========================================

def masked_l1(pred_t: torch.Tensor, gt_t: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """
    샘플별 Σ|T − T̃| / Σ(1 − M) 의 배치 평균

    마스크는 영상 채널로 브로드캐스트해서 센다. 모든 픽셀이 적정 노출인
    샘플(분모 0)은 건너뛴다.
    """
    diff = (pred_t - gt_t).abs().flatten(1).sum(dim=1)
    denominator = (1.0 - mask).expand_as(pred_t).flatten(1).sum(dim=1)
    valid = denominator > 0
    if not bool(valid.all()):
        logger.warning(
            f"적정 노출 픽셀뿐인 샘플 {int((~valid).sum())}개는 L1 항에서 제외합니다."
        )
    if not bool(valid.any()):
        return diff.sum() * 0.0
    return (diff[valid] / denominator[valid]).mean()


def perceptual_loss(pred_t: torch.Tensor, gt_t: torch.Tensor, extractor: Optional[nn.Module]) -> torch.Tensor:
    """
    Σ_k mean|φ_k(T) − φ_k(T̃)|

    레이어별 ‖·‖₁ 은 합이 아니라 원소 평균 (합 = 평균 × φ_k 원소 수).
    레이어마다 크기가 달라도 각 항은 정규화 L1 항과 같은 스케일.
    """
    if extractor is None:
        return pred_t.new_zeros(())
    extractor = extractor.to(device=pred_t.device, dtype=pred_t.dtype)
    total = pred_t.new_zeros(())
    for a, b in zip(extractor(pred_t), extractor(gt_t)):
        total = total + (a - b).abs().mean()
    return total


def refine_loss(pred: torch.Tensor, gt: torch.Tensor, mask: torch.Tensor,
                extractor: Optional[nn.Module] = None, mu: float = Settings.MU) -> torch.Tensor:
    """
    RefineNet 손실 = 정규화 L1 + 지각 손실 (μ-law 영상 기준)

    Args:
        pred: 병합된 최종 HDR B×3×H×W
        gt: GT HDR B×3×H×W
        mask: 적정 노출 마스크 B×1×H×W
        extractor: 지각 특징 추출기 (None 이면 지각 항 0)
    """
    if pred.shape != gt.shape:
        raise ValueError(f"예측과 GT 크기가 다릅니다: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    if mask.shape[0] != pred.shape[0] or mask.shape[-2:] != pred.shape[-2:]:
        raise ValueError(f"마스크 크기가 맞지 않습니다: mask={tuple(mask.shape)}, pred={tuple(pred.shape)}")
    pred_t, gt_t = mu_law(pred, mu), mu_law(gt, mu)
    return masked_l1(pred_t, gt_t, mask.to(pred.dtype)) + perceptual_loss(pred_t, gt_t, extractor)


def finetune_loss(pred: torch.Tensor, gt: torch.Tensor, mask: torch.Tensor, coarse_center: torch.Tensor,
                  extractor: Optional[nn.Module] = None, mu: float = Settings.MU) -> torch.Tensor:
    """종단간 미세조정 손실 = RefineNet 손실 + 중심 coarse 프레임 손실"""
    return refine_loss(pred, gt, mask, extractor, mu) + coarse_loss(coarse_center, gt, mu)
