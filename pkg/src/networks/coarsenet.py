#!/usr/bin/env python3
"""
src/networks/coarsenet.py

📋 역할: 1단계 CoarseNet (영상 공간 정렬 + 융합)
- FlowNet: 3(또는 4)장 입력에서 두 이웃 프레임의 광류 추정
- WeightNet: 5 LDR + 5 radiance(10장) 입력에서 5개 블렌딩 가중치 맵 예측
- blend_coarse: radiance 도메인 가중 평균 H^c = Σω·I / (Σω + ε)
- coarse_forward / prepare_flow_input / predict_flows: 프레임 단위 진입점
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from config.settings import Settings
from src.imaging.frames import FlowField, LdrFrame, RadianceFrame, stack_frames, to_array, to_tensor
from src.imaging.geometry import backward_warp_tensor
from src.imaging.radiometry import ldr_to_linear, linear_to_ldr
from src.networks.blocks import (
    conv, count_parameters, crop, initialize_weights, lrelu, pad_to_multiple, upsample2x, zero_init,
)

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)


@dataclass
class CoarseArch:
    """CoarseNet 구조 설정"""
    period: int = 2
    flow_channels: List[int] = field(default_factory=lambda: [16, 32, 64, 96])
    weight_base: int = 32
    weight_depth: int = 3
    gamma: float = Settings.GAMMA
    eps: float = Settings.BLEND_EPS

    def __post_init__(self):
        self.flow_channels = [int(c) for c in self.flow_channels]
        if self.period not in (2, 3):
            raise ValueError(f"노출 주기는 2 또는 3 이어야 합니다: period={self.period}")
        if not self.flow_channels or any(c <= 0 for c in self.flow_channels):
            raise ValueError(f"광류 네트워크 채널 설정이 올바르지 않습니다: {self.flow_channels}")
        if self.weight_base <= 0 or self.weight_depth <= 0:
            raise ValueError(
                f"가중치 네트워크 설정이 올바르지 않습니다: base={self.weight_base}, depth={self.weight_depth}"
            )
        if self.eps < 0:
            raise ValueError(f"블렌딩 안정화 상수는 음수일 수 없습니다: eps={self.eps}")

    @property
    def flow_frames(self) -> int:
        """광류 입력 영상 수 (2노출: 3장, 3노출: 4장)"""
        return 3 if self.period == 2 else 4

    @property
    def downsample_factor(self) -> int:
        return 2 ** len(self.flow_channels)

    def scaled(self, factor: float) -> "CoarseArch":
        """채널 수를 factor 배로 축소한 구조 (데스크 스케일 실험용)"""
        return replace(
            self,
            flow_channels=[max(4, int(round(c * factor))) for c in self.flow_channels],
            weight_base=max(4, int(round(self.weight_base * factor))),
        )

    def to_dict(self) -> Dict:
        return asdict(self)


# ========================================
# 광류 네트워크
# ========================================

class FlowNet(nn.Module):
    """
    공유 피라미드 인코더 + coarse-to-fine 광류 디코더

    각 입력 영상을 같은 인코더로 1/2 ~ 1/2^L 해상도 특징으로 만든 뒤,
    가장 거친 레벨에서 광류를 예측하고 레벨마다 2배 업샘플(값 2배) + 잔차 보정한다.
    """

    def __init__(self, num_frames: int, channels: Sequence[int]):
        super().__init__()
        self.num_frames = num_frames
        self.encoders = nn.ModuleList()
        in_channels = 3
        for out_channels in channels:
            self.encoders.append(nn.Sequential(
                conv(in_channels, out_channels, stride=2), lrelu(),
                conv(out_channels, out_channels), lrelu(),
            ))
            in_channels = out_channels

        self.decoders = nn.ModuleList()
        self.heads = nn.ModuleList()
        for level, feat_channels in enumerate(channels):
            is_coarsest = level == len(channels) - 1
            dec_in = num_frames * feat_channels + (0 if is_coarsest else 4)
            self.decoders.append(nn.Sequential(
                conv(dec_in, feat_channels), lrelu(),
                conv(feat_channels, feat_channels), lrelu(),
            ))
            self.heads.append(conv(feat_channels, 4))

        initialize_weights([self.encoders, self.decoders])
        for head in self.heads:
            zero_init(head)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """B×(3·N)×H×W → B×4×H×W (이전 이웃 / 다음 이웃 광류)"""
        batch, _, height, width = x.shape
        feats = x.reshape(batch * self.num_frames, 3, height, width)
        pyramid = []
        for encoder in self.encoders:
            feats = encoder(feats)
            pyramid.append(feats.reshape(batch, -1, *feats.shape[-2:]))

        flow = None
        for level in reversed(range(len(pyramid))):
            inputs = pyramid[level]
            if flow is not None:
                flow = upsample2x(flow) * 2.0
                inputs = torch.cat([inputs, flow], dim=1)
            delta = self.heads[level](self.decoders[level](inputs))
            flow = delta if flow is None else flow + delta
        return upsample2x(flow) * 2.0


# ========================================
# 블렌딩 가중치 네트워크
# ========================================

class WeightNet(nn.Module):
    """스킵 연결 인코더-디코더, softplus 로 음이 아닌 5채널 가중치 출력"""

    def __init__(self, in_channels: int = 30, base: int = 32, depth: int = 3, out_channels: int = 5):
        super().__init__()
        self.depth = depth
        self.stem = nn.Sequential(conv(in_channels, base), lrelu(), conv(base, base), lrelu())
        self.downs = nn.ModuleList()
        widths = [base * 2 ** d for d in range(depth + 1)]
        for d in range(depth):
            self.downs.append(nn.Sequential(
                conv(widths[d], widths[d + 1], stride=2), lrelu(),
                conv(widths[d + 1], widths[d + 1]), lrelu(),
            ))
        self.ups = nn.ModuleList()
        self.merges = nn.ModuleList()
        for d in reversed(range(depth)):
            self.ups.append(nn.Sequential(conv(widths[d + 1], widths[d]), lrelu()))
            self.merges.append(nn.Sequential(conv(widths[d] * 2, widths[d]), lrelu()))
        self.head = conv(base, out_channels)
        initialize_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        skips = [self.stem(x)]
        for down in self.downs:
            skips.append(down(skips[-1]))
        out = skips.pop()
        for up, merge in zip(self.ups, self.merges):
            out = up(upsample2x(out))
            out = merge(torch.cat([out, skips.pop()], dim=1))
        return F.softplus(self.head(out))


def blend_coarse(images: torch.Tensor, weights: torch.Tensor, eps: float = Settings.BLEND_EPS) -> torch.Tensor:
    """
    H^c = Σ ω_k · I_k / (Σ ω_k + ε)

    Args:
        images: B×5×C×H×W radiance (I_{i−1}, Î_{i−1,i}, I_i, Î_{i+1,i}, I_{i+1})
        weights: B×5×H×W, 음이 아닌 값
    """
    if images.dim() != 5 or weights.dim() != 4:
        raise ValueError(
            f"블렌딩 입력 차원이 올바르지 않습니다: images={tuple(images.shape)}, weights={tuple(weights.shape)}"
        )
    if images.shape[:2] != weights.shape[:2] or images.shape[-2:] != weights.shape[-2:]:
        raise ValueError(
            f"영상과 가중치 크기가 다릅니다: images={tuple(images.shape)}, weights={tuple(weights.shape)}"
        )
    numerator = (weights.unsqueeze(2) * images).sum(dim=1)
    denominator = weights.sum(dim=1, keepdim=True) + eps
    return numerator / denominator


def build_flow_input(ldr: torch.Tensor, exposures: torch.Tensor, num_frames: int,
                     gamma: float = Settings.GAMMA) -> torch.Tensor:
    """
    광류 입력 구성: 기준 프레임을 이웃 노출로 재렌더링 (노출 정합)

    num_frames=3: [L_prev, g_prev(I_ref), L_next]
    num_frames=4: [L_prev, g_prev(I_ref), g_next(I_ref), L_next]

    Args:
        ldr: B×3×3×H×W (이전, 기준, 다음)
        exposures: B×3
    """
    if ldr.dim() != 5 or ldr.shape[1] != 3:
        raise ValueError(f"광류 입력은 B×3×C×H×W 윈도우여야 합니다: shape={tuple(ldr.shape)}")
    t = exposures.to(ldr.dtype).reshape(exposures.shape[0], 3, 1, 1, 1)
    prev, ref, nxt = ldr[:, 0], ldr[:, 1], ldr[:, 2]
    radiance_ref = ldr_to_linear(ref, t[:, 1], gamma)
    matched_prev = linear_to_ldr(radiance_ref, t[:, 0], gamma)
    if num_frames == 3:
        parts = [prev, matched_prev, nxt]
    elif num_frames == 4:
        parts = [prev, matched_prev, linear_to_ldr(radiance_ref, t[:, 2], gamma), nxt]
    else:
        raise ValueError(f"광류 입력 프레임 수는 3 또는 4 이어야 합니다: {num_frames}")
    return torch.cat(parts, dim=1)


class CoarseOutput(NamedTuple):
    radiance: torch.Tensor      # B×3×H×W
    flows: Tuple[torch.Tensor, torch.Tensor]
    weights: torch.Tensor       # B×5×H×W


class CoarseNet(nn.Module):
    """광류 정렬 + 가중치 블렌딩으로 중심 프레임의 coarse HDR 복원"""

    def __init__(self, arch: Optional[CoarseArch] = None):
        super().__init__()
        self.arch = arch or CoarseArch()
        self.flow_net = FlowNet(self.arch.flow_frames, self.arch.flow_channels)
        self.weight_net = WeightNet(30, self.arch.weight_base, self.arch.weight_depth)
        logger.info(
            f"CoarseNet 생성: period={self.arch.period}, "
            f"flow 파라미터 {count_parameters(self.flow_net):,}, "
            f"weight 파라미터 {count_parameters(self.weight_net):,}"
        )

    def predict_flows(self, flow_input: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """B×(3·N)×H×W → (이전 이웃 광류, 다음 이웃 광류), 각 B×2×H×W"""
        expected = 3 * self.arch.flow_frames
        if flow_input.dim() != 4 or flow_input.shape[1] != expected:
            raise ValueError(
                f"광류 입력 채널은 {expected} 이어야 합니다: shape={tuple(flow_input.shape)}"
            )
        padded, size = pad_to_multiple(flow_input, self.arch.downsample_factor)
        flows = crop(self.flow_net(padded), size)
        return flows[:, :2], flows[:, 2:]

    def forward(self, ldr: torch.Tensor, exposures: torch.Tensor,
                flows: Optional[Tuple[torch.Tensor, torch.Tensor]] = None) -> CoarseOutput:
        """
        Args:
            ldr: B×3×3×H×W (L_{i−1}, L_i, L_{i+1})
            exposures: B×3
            flows: 외부 지정 광류 (이전, 다음). 지정 시 광류 네트워크를 건너뛴다.
        """
        if ldr.dim() != 5 or ldr.shape[1] != 3 or ldr.shape[2] != 3:
            raise ValueError(f"CoarseNet 입력은 B×3×3×H×W 이어야 합니다: shape={tuple(ldr.shape)}")
        gamma = self.arch.gamma
        if flows is None:
            flows = self.predict_flows(build_flow_input(ldr, exposures, self.arch.flow_frames, gamma))
        flow_prev, flow_next = flows

        t = exposures.to(ldr.dtype).reshape(exposures.shape[0], 3, 1, 1, 1)
        prev, ref, nxt = ldr[:, 0], ldr[:, 1], ldr[:, 2]
        warped_prev = backward_warp_tensor(prev, flow_prev.to(ldr.dtype).expand(ldr.shape[0], -1, -1, -1))
        warped_next = backward_warp_tensor(nxt, flow_next.to(ldr.dtype).expand(ldr.shape[0], -1, -1, -1))
        exposures5 = torch.stack([t[:, 0], t[:, 0], t[:, 1], t[:, 2], t[:, 2]], dim=1)

        ldr_stack = torch.stack([prev, warped_prev, ref, warped_next, nxt], dim=1)
        radiance_stack = ldr_to_linear(ldr_stack, exposures5, gamma)

        batch, _, _, height, width = ldr_stack.shape
        weight_input = torch.cat([
            ldr_stack.reshape(batch, 15, height, width),
            radiance_stack.reshape(batch, 15, height, width),
        ], dim=1)
        padded, size = pad_to_multiple(weight_input, 2 ** self.arch.weight_depth)
        weights = crop(self.weight_net(padded), size)
        radiance = blend_coarse(radiance_stack, weights, self.arch.eps)
        return CoarseOutput(radiance=radiance, flows=(flow_prev, flow_next), weights=weights)


# ========================================
# 프레임 단위 진입점
# ========================================

@dataclass
class BlendWeights:
    """5개 블렌딩 가중치 맵 (H×W×5)"""
    maps: np.ndarray

    def __post_init__(self):
        self.maps = np.asarray(self.maps, dtype=np.float64)
        if self.maps.ndim != 3 or self.maps.shape[2] != 5:
            raise ValueError(f"가중치 맵은 H×W×5 이어야 합니다: shape={self.maps.shape}")
        if self.maps.size and self.maps.min() < 0:
            raise ValueError("블렌딩 가중치는 음수일 수 없습니다.")


def blend_frames(images: Sequence[RadianceFrame], weights: BlendWeights,
                 eps: float = Settings.BLEND_EPS) -> RadianceFrame:
    """프레임 단위 blend_coarse"""
    if len(images) != 5:
        raise ValueError(f"블렌딩에는 radiance 영상 5장이 필요합니다: {len(images)}")
    stack = stack_frames(images, torch.float64)
    maps = torch.from_numpy(weights.maps).permute(2, 0, 1).unsqueeze(0)
    return RadianceFrame(to_array(blend_coarse(stack, maps, eps)))


def prepare_flow_input(prev: LdrFrame, ref: LdrFrame, nxt: LdrFrame,
                       num_frames: Optional[int] = None) -> np.ndarray:
    """
    광류 입력 영상 (H×W×9, 3노출 윈도우는 H×W×12)

    num_frames 미지정 시 이웃 노출이 같으면 3장, 다르면 4장 구성
    """
    frames = [prev, ref, nxt]
    if len({frame.pixels.shape for frame in frames}) != 1:
        raise ValueError(f"프레임 크기가 서로 다릅니다: {[frame.pixels.shape for frame in frames]}")
    if num_frames is None:
        num_frames = 3 if np.isclose(prev.exposure_t, nxt.exposure_t) else 4
    ldr = stack_frames(frames, torch.float64)
    exposures = torch.tensor([[f.exposure_t for f in frames]], dtype=torch.float64)
    return to_array(build_flow_input(ldr, exposures, num_frames, ref.gamma))


def predict_flows(model: CoarseNet, flow_input: np.ndarray) -> Tuple[FlowField, FlowField]:
    dtype = next(model.parameters()).dtype
    device = next(model.parameters()).device
    with torch.no_grad():
        flow_prev, flow_next = model.predict_flows(to_tensor(flow_input, dtype).to(device))
    return FlowField(to_array(flow_prev)), FlowField(to_array(flow_next))


def window_tensors(frames: Sequence[LdrFrame], dtype: torch.dtype,
                   device=None) -> Tuple[torch.Tensor, torch.Tensor]:
    """LDR 프레임 목록 → (1×N×3×H×W, 1×N) 텐서"""
    ldr = stack_frames(frames, dtype).to(device)
    exposures = torch.tensor([[f.exposure_t for f in frames]], dtype=dtype, device=device)
    return ldr, exposures


def coarse_forward(model: CoarseNet, window: Sequence[LdrFrame],
                   flows: Optional[Tuple[FlowField, FlowField]] = None) -> RadianceFrame:
    """3프레임 윈도우(이전, 기준, 다음)의 중심 coarse HDR"""
    if len(window) != 3:
        raise ValueError(f"CoarseNet 윈도우는 3프레임이어야 합니다: {len(window)}")
    parameter = next(model.parameters())
    ldr, exposures = window_tensors(window, parameter.dtype, parameter.device)
    override = None
    if flows is not None:
        override = tuple(to_tensor(f.displacements, parameter.dtype).to(parameter.device) for f in flows)
    with torch.no_grad():
        output = model(ldr, exposures, flows=override)
    return RadianceFrame(np.clip(to_array(output.radiance), 0.0, None))
