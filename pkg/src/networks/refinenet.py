#!/usr/bin/env python3
"""
src/networks/refinenet.py

📋 역할: 2단계 RefineNet (특징 공간 정렬 + 융합)
- FeatureExtractor: μ-law 압축 coarse HDR → 3레벨 특징 피라미드 (가중치 공유)
- DeformAlign / deformable_sample: 학습된 오프셋으로 샘플링하는 deformable convolution
- PCDAlign: 피라미드 + 캐스케이드 deformable 정렬
- TemporalAttentionFusion: 기준 특징과의 어텐션 맵으로 오정렬 특징 억제 후 융합
- Decoder: 기준 프레임 특징 스킵 연결 2개, μ-law 잔차 출력
- merge_output: H = M ⊙ H^c + (1 − M) ⊙ H^r
"""

import logging
from dataclasses import asdict, dataclass, replace
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
from torchvision.ops import deform_conv2d

from config.settings import Settings
from src.imaging.frames import LdrFrame, RadianceFrame, stack_frames, to_array, to_tensor
from src.imaging.radiometry import inverse_mu_law, ldr_to_linear, mask_batch, mu_law
from src.networks.blocks import (
    ResidualBlock, conv, count_parameters, crop, initialize_weights, lrelu, pad_to_multiple,
    upsample2x, zero_init,
)

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

PYRAMID_LEVELS = 3
KERNEL_TAPS = 9


@dataclass
class RefineArch:
    """RefineNet 구조 설정"""
    nf: int = 64
    deform_groups: int = 8
    extractor_blocks: int = 1
    decoder_blocks: int = 2
    use_alignment: bool = True
    use_attention: bool = True
    # False: CoarseNet 없이 노출 보정된 LDR 3프레임을 직접 입력
    use_coarse: bool = True
    mu: float = Settings.MU

    def __post_init__(self):
        if self.nf <= 0 or self.deform_groups <= 0:
            raise ValueError(f"RefineNet 채널 설정이 올바르지 않습니다: nf={self.nf}, groups={self.deform_groups}")
        if self.nf % self.deform_groups != 0:
            raise ValueError(
                f"특징 채널({self.nf})은 deformable 그룹 수({self.deform_groups})의 배수여야 합니다."
            )
        if self.extractor_blocks < 0 or self.decoder_blocks < 0:
            raise ValueError("잔차 블록 수는 음수일 수 없습니다.")

    @property
    def offset_channels(self) -> int:
        return 2 * self.deform_groups * KERNEL_TAPS

    def scaled(self, factor: float) -> "RefineArch":
        nf = max(self.deform_groups, int(round(self.nf * factor)))
        nf -= nf % self.deform_groups
        return replace(self, nf=nf)

    def to_dict(self) -> Dict:
        return asdict(self)


# ========================================
# 특징 추출
# ========================================

class FeatureExtractor(nn.Module):
    """레벨 0: 원해상도 nf 채널, 레벨 1/2: stride-2 conv 로 1/2, 1/4"""

    def __init__(self, nf: int = 64, num_blocks: int = 1):
        super().__init__()
        self.level0 = nn.Sequential(conv(3, nf), lrelu(), *[ResidualBlock(nf) for _ in range(num_blocks)])
        self.level1 = nn.Sequential(conv(nf, nf, stride=2), lrelu(), conv(nf, nf), lrelu())
        self.level2 = nn.Sequential(conv(nf, nf, stride=2), lrelu(), conv(nf, nf), lrelu())
        initialize_weights([self.level0[0], self.level1, self.level2])

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        f0 = self.level0(x)
        f1 = self.level1(f0)
        f2 = self.level2(f1)
        return [f0, f1, f2]


# ========================================
# Deformable 정렬
# ========================================

def deformable_sample(feature: torch.Tensor, offsets: torch.Tensor, weight: torch.Tensor,
                      bias: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    3×3 deformable convolution (stride 1, zero padding 1)

    오프셋 채널 배치는 그룹별·탭별 (dy, dx) 순서이며 단위는 픽셀이다.
    """
    if feature.dim() != 4 or offsets.dim() != 4:
        raise ValueError(
            f"deformable 입력은 4차원이어야 합니다: feature={tuple(feature.shape)}, offsets={tuple(offsets.shape)}"
        )
    if feature.shape[0] != offsets.shape[0] or feature.shape[-2:] != offsets.shape[-2:]:
        raise ValueError(
            f"특징과 오프셋 크기가 다릅니다: feature={tuple(feature.shape)}, offsets={tuple(offsets.shape)}"
        )
    kernel_taps = weight.shape[-2] * weight.shape[-1]
    if offsets.shape[1] % (2 * kernel_taps) != 0:
        raise ValueError(f"오프셋 채널 수({offsets.shape[1]})가 커널 탭 수({kernel_taps})와 맞지 않습니다.")
    padding = weight.shape[-1] // 2
    return deform_conv2d(feature, offsets, weight, bias, stride=1, padding=padding)


class DeformAlign(nn.Module):
    """오프셋 예측 헤드(0 초기화) + deformable convolution"""

    def __init__(self, nf: int, groups: int):
        super().__init__()
        self.offset_head = zero_init(conv(nf, 2 * groups * KERNEL_TAPS))
        self.weight = nn.Parameter(torch.empty(nf, nf, 3, 3))
        self.bias = nn.Parameter(torch.zeros(nf))
        nn.init.kaiming_normal_(self.weight, a=0, mode="fan_in")

    def predict_offsets(self, offset_feat: torch.Tensor) -> torch.Tensor:
        limit = max(offset_feat.shape[-2:]) / 2.0
        return torch.clamp(self.offset_head(offset_feat), -limit, limit)

    def forward(self, x: torch.Tensor, offset_feat: torch.Tensor,
                offsets: Optional[torch.Tensor] = None):
        if offsets is None:
            offsets = self.predict_offsets(offset_feat)
        else:
            offsets = offsets.to(x.dtype).expand(x.shape[0], -1, -1, -1)
        return deformable_sample(x, offsets, self.weight, self.bias), offsets


class PCDAlign(nn.Module):
    """
    피라미드 · 캐스케이드 · deformable 정렬

    가장 거친 레벨에서 [F_nbr, F_ref] 로 오프셋을 예측하고, 더 세밀한 레벨은
    2배 업샘플(값 2배)한 거친 오프셋을 함께 입력받는다. 레벨 0 결과는
    기준 특징을 조건으로 한 캐스케이드 deformable 단계로 한 번 더 보정한다.
    """

    def __init__(self, nf: int = 64, groups: int = 8):
        super().__init__()
        off_ch = 2 * groups * KERNEL_TAPS
        # 레벨 2 (1/4)
        self.l2_offset = nn.Sequential(conv(nf * 2, nf), lrelu(), conv(nf, nf), lrelu())
        self.l2_dcn = DeformAlign(nf, groups)
        # 레벨 1 (1/2)
        self.l1_offset = nn.Sequential(conv(nf * 2 + off_ch, nf), lrelu(), conv(nf, nf), lrelu())
        self.l1_dcn = DeformAlign(nf, groups)
        self.l1_fea = conv(nf * 2, nf)
        # 레벨 0 (원해상도)
        self.l0_offset = nn.Sequential(conv(nf * 2 + off_ch, nf), lrelu(), conv(nf, nf), lrelu())
        self.l0_dcn = DeformAlign(nf, groups)
        self.l0_fea = conv(nf * 2, nf)
        # 캐스케이드
        self.cas_offset = nn.Sequential(conv(nf * 2, nf), lrelu(), conv(nf, nf), lrelu())
        self.cas_dcn = DeformAlign(nf, groups)
        self.act = lrelu()
        initialize_weights([self.l2_offset, self.l1_offset, self.l0_offset, self.cas_offset,
                            self.l1_fea, self.l0_fea])

    def forward(self, nbr: Sequence[torch.Tensor], ref: Sequence[torch.Tensor],
                offsets: Optional[Sequence[torch.Tensor]] = None) -> torch.Tensor:
        """
        Args:
            nbr, ref: [레벨0, 레벨1, 레벨2] 특징
            offsets: 외부 지정 오프셋 [레벨2, 레벨1, 레벨0, 캐스케이드]
        """
        if len(nbr) != PYRAMID_LEVELS or len(ref) != PYRAMID_LEVELS:
            raise ValueError(f"특징 피라미드는 {PYRAMID_LEVELS} 레벨이어야 합니다.")
        for a, b in zip(nbr, ref):
            if a.shape != b.shape:
                raise ValueError(f"이웃/기준 특징 크기가 다릅니다: {tuple(a.shape)} vs {tuple(b.shape)}")
        given = list(offsets) if offsets is not None else [None] * 4

        l2_feat = self.l2_offset(torch.cat([nbr[2], ref[2]], dim=1))
        l2_fea, l2_off = self.l2_dcn(nbr[2], l2_feat, given[0])
        l2_fea = self.act(l2_fea)

        l1_feat = self.l1_offset(torch.cat([nbr[1], ref[1], upsample2x(l2_off) * 2.0], dim=1))
        l1_fea, l1_off = self.l1_dcn(nbr[1], l1_feat, given[1])
        l1_fea = self.act(self.l1_fea(torch.cat([l1_fea, upsample2x(l2_fea)], dim=1)))

        l0_feat = self.l0_offset(torch.cat([nbr[0], ref[0], upsample2x(l1_off) * 2.0], dim=1))
        l0_fea, _ = self.l0_dcn(nbr[0], l0_feat, given[2])
        l0_fea = self.l0_fea(torch.cat([l0_fea, upsample2x(l1_fea)], dim=1))

        cas_feat = self.cas_offset(torch.cat([l0_fea, ref[0]], dim=1))
        aligned, _ = self.cas_dcn(l0_fea, cas_feat, given[3])
        return self.act(aligned)


# ========================================
# 시간 어텐션 융합
# ========================================

class TemporalAttentionFusion(nn.Module):
    """[F_k, F_ref] → conv → lrelu → conv → sigmoid 어텐션, 곱한 뒤 1×1 conv 융합"""

    def __init__(self, nf: int = 64, num_frames: int = 3, center: int = 1, use_attention: bool = True):
        super().__init__()
        self.center = center
        self.use_attention = use_attention
        if use_attention:
            self.att1 = conv(nf * 2, nf)
            self.att2 = conv(nf, nf)
        self.fusion = conv(num_frames * nf, nf, kernel_size=1)
        self.act = lrelu()
        initialize_weights(self)

    def attention_maps(self, aligned: torch.Tensor) -> torch.Tensor:
        ref = aligned[:, self.center]
        maps = []
        for k in range(aligned.shape[1]):
            att = self.act(self.att1(torch.cat([aligned[:, k], ref], dim=1)))
            maps.append(torch.sigmoid(self.att2(att)))
        return torch.stack(maps, dim=1)

    def forward(self, aligned: torch.Tensor, attention: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        Args:
            aligned: B×N×C×H×W (중심이 기준 특징)
            attention: 외부 지정 어텐션 맵 (B×N×C×H×W 로 브로드캐스트 가능)
        """
        batch, frames, channels, height, width = aligned.shape
        if attention is None and self.use_attention:
            attention = self.attention_maps(aligned)
        if attention is not None:
            aligned = aligned * attention.to(aligned.dtype)
        return self.act(self.fusion(aligned.reshape(batch, frames * channels, height, width)))


# ========================================
# 디코더
# ========================================

class Decoder(nn.Module):
    """
    stride-2 다운샘플 2회 → 병목 잔차 블록 → 업샘플 2회
    업샘플 단계마다 기준 프레임 특징(1/2, 원해상도)을 스킵 연결
    """

    def __init__(self, nf: int = 64, num_blocks: int = 2):
        super().__init__()
        self.down1 = nn.Sequential(conv(nf, nf, stride=2), lrelu())
        self.down2 = nn.Sequential(conv(nf, nf, stride=2), lrelu())
        self.bottleneck = nn.Sequential(*[ResidualBlock(nf) for _ in range(num_blocks)])
        self.up2 = nn.Sequential(conv(nf, nf), lrelu())
        self.merge1 = nn.Sequential(conv(nf * 2, nf), lrelu())
        self.up1 = nn.Sequential(conv(nf, nf), lrelu())
        self.merge0 = nn.Sequential(conv(nf * 2, nf), lrelu())
        self.head = conv(nf, 3)
        initialize_weights([self.down1, self.down2, self.up2, self.merge1, self.up1, self.merge0, self.head])

    def forward(self, fused: torch.Tensor, ref_pyramid: Sequence[torch.Tensor]) -> torch.Tensor:
        d1 = self.down1(fused)
        d2 = self.bottleneck(self.down2(d1))
        u1 = self.merge1(torch.cat([self.up2(upsample2x(d2)), ref_pyramid[1]], dim=1))
        u0 = self.merge0(torch.cat([self.up1(upsample2x(u1)), ref_pyramid[0]], dim=1))
        return self.head(u0)


def merge_output(coarse: torch.Tensor, refined: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """H = M ⊙ H^c + (1 − M) ⊙ H^r"""
    return mask * coarse + (1.0 - mask) * refined


class RefineOutput(NamedTuple):
    radiance: torch.Tensor      # 최종 H (B×3×H×W)
    refined: torch.Tensor       # H^r
    mask: torch.Tensor          # M (B×1×H×W)


class RefineNet(nn.Module):
    """세 coarse HDR 프레임의 특징 정렬/융합으로 기준 프레임 HDR 보정"""

    def __init__(self, arch: Optional[RefineArch] = None):
        super().__init__()
        self.arch = arch or RefineArch()
        nf = self.arch.nf
        self.extractor = FeatureExtractor(nf, self.arch.extractor_blocks)
        self.align = PCDAlign(nf, self.arch.deform_groups) if self.arch.use_alignment else None
        self.fusion = TemporalAttentionFusion(nf, 3, 1, self.arch.use_attention)
        self.decoder = Decoder(nf, self.arch.decoder_blocks)
        logger.info(
            f"RefineNet 생성: nf={nf}, alignment={self.arch.use_alignment}, "
            f"attention={self.arch.use_attention}, coarse={self.arch.use_coarse}, "
            f"파라미터 {count_parameters(self):,}"
        )

    def extract(self, coarse: torch.Tensor) -> List[torch.Tensor]:
        """radiance B×3×H×W → μ-law 압축 후 특징 피라미드"""
        return self.extractor(mu_law(coarse, self.arch.mu))

    def forward(self, coarse: torch.Tensor, reference_ldr: torch.Tensor,
                roles: Optional[Sequence[str]] = None, mask: Optional[torch.Tensor] = None,
                offsets: Optional[Sequence[Optional[Sequence[torch.Tensor]]]] = None,
                attention: Optional[torch.Tensor] = None) -> RefineOutput:
        """
        Args:
            coarse: B×3×3×H×W coarse HDR (H^c_{i−1}, H^c_i, H^c_{i+1})
            reference_ldr: B×3×H×W 기준 LDR
            roles: 샘플별 기준 노출 역할 (mask 미지정 시 필요)
            mask: 외부 지정 적정 노출 마스크 B×1×H×W
            offsets: 이웃별 [이전, 다음] PCD 외부 오프셋
            attention: 외부 지정 어텐션 맵
        """
        if coarse.dim() != 5 or coarse.shape[1] != 3 or coarse.shape[2] != 3:
            raise ValueError(f"RefineNet 입력은 B×3×3×H×W 이어야 합니다: shape={tuple(coarse.shape)}")
        if mask is None:
            if roles is None:
                raise ValueError("기준 노출 역할(roles) 또는 마스크가 필요합니다.")
            mask = mask_batch(reference_ldr, roles)
        mask = mask.to(coarse.dtype)

        batch, _, _, height, width = coarse.shape
        padded, size = pad_to_multiple(coarse.reshape(batch * 3, 3, height, width), 4)
        pyramids = [level.reshape(batch, 3, *level.shape[1:]) for level in self.extract(padded)]
        ref_pyramid = [level[:, 1] for level in pyramids]

        aligned = []
        for k in range(3):
            nbr_pyramid = [level[:, k] for level in pyramids]
            if k == 1 or self.align is None:
                aligned.append(nbr_pyramid[0])
                continue
            given = None if offsets is None else offsets[0 if k == 0 else 1]
            aligned.append(self.align(nbr_pyramid, ref_pyramid, given))

        fused = self.fusion(torch.stack(aligned, dim=1), attention)
        residual = crop(self.decoder(fused, ref_pyramid), size)
        tonemapped = torch.clamp(mu_law(coarse[:, 1], self.arch.mu) + residual, min=0.0)
        refined = inverse_mu_law(tonemapped, self.arch.mu)
        return RefineOutput(radiance=merge_output(coarse[:, 1], refined, mask), refined=refined, mask=mask)


# ========================================
# 프레임 단위 진입점
# ========================================

def extract_features(model: RefineNet, coarse: RadianceFrame) -> List[np.ndarray]:
    """coarse HDR 프레임의 특징 피라미드 (레벨별 h×w×nf)"""
    parameter = next(model.parameters())
    with torch.no_grad():
        levels = model.extract(to_tensor(coarse.pixels, parameter.dtype).to(parameter.device))
    return [to_array(level) for level in levels]


def refine_forward(model: RefineNet, coarse_window: Sequence[RadianceFrame], reference_ldr: LdrFrame,
                   role: str) -> RadianceFrame:
    """coarse HDR 3프레임 + 기준 LDR → 최종 HDR"""
    if len(coarse_window) != 3:
        raise ValueError(f"RefineNet 윈도우는 3프레임이어야 합니다: {len(coarse_window)}")
    parameter = next(model.parameters())
    coarse = stack_frames(coarse_window, parameter.dtype).to(parameter.device)
    ref = to_tensor(reference_ldr.pixels, parameter.dtype).to(parameter.device)
    with torch.no_grad():
        output = model(coarse, ref, roles=[role])
    return RadianceFrame(np.clip(to_array(output.radiance), 0.0, None))


def pcd_align(model: RefineNet, neighbor_pyramid: Sequence[torch.Tensor], reference_pyramid: Sequence[torch.Tensor],
              offsets: Optional[Sequence[torch.Tensor]] = None) -> torch.Tensor:
    """이웃 특징 피라미드를 기준 피라미드에 정렬 (레벨 0 해상도 결과)"""
    if model.align is None:
        raise ValueError("정렬 모듈이 비활성화된 RefineNet 입니다 (use_alignment=False).")
    return model.align(neighbor_pyramid, reference_pyramid, offsets)


def temporal_attention_fuse(model: RefineNet, aligned: Sequence[torch.Tensor]) -> torch.Tensor:
    """정렬된 특징 3장(이전, 기준, 다음) → 융합 특징"""
    if len(aligned) != 3:
        raise ValueError(f"융합에는 정렬된 특징 3장이 필요합니다: {len(aligned)}")
    return model.fusion(torch.stack(list(aligned), dim=1))


def ldr_window_radiance(ldr: torch.Tensor, exposures: torch.Tensor, gamma: float = Settings.GAMMA) -> torch.Tensor:
    """
    LDR 3프레임 → 노출 보정 radiance 스택 (use_coarse=False 인 RefineNet 입력)

    Args:
        ldr: B×3×3×H×W (i−1, i, i+1)
        exposures: B×3 노출 시간
    """
    if ldr.dim() != 5 or ldr.shape[1] != 3:
        raise ValueError(f"LDR 윈도우는 B×3×3×H×W 이어야 합니다: shape={tuple(ldr.shape)}")
    if exposures.shape != ldr.shape[:2]:
        raise ValueError(f"노출 시간 크기가 윈도우와 다릅니다: {tuple(exposures.shape)} vs {tuple(ldr.shape[:2])}")
    return ldr_to_linear(ldr, exposures.to(ldr.dtype).reshape(*exposures.shape, 1, 1, 1), gamma)
