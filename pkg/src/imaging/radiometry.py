#!/usr/bin/env python3
"""
src/imaging/radiometry.py

📋 역할: 픽셀 단위 방사 측정 변환
- LDR ↔ 선형 radiance 변환 (고정 감마 곡선)
- 노출 재렌더링 g: radiance를 다른 노출의 LDR로 클리핑 변환
- μ-law 톤매핑 (손실/평가용) 및 역변환
- Reinhard 전역 톤매핑 (미리보기 전용)
- 기준 프레임의 적정 노출(well-exposed) 마스크

모든 배열 함수는 numpy 배열과 torch 텐서를 모두 받는다.
"""

import math
from typing import Optional, Sequence, Union

import numpy as np
import torch

from config.settings import Settings
from src.imaging.frames import (
    ROLES, ArrayLike, LdrFrame, RadianceFrame, TonemappedFrame, WellExposedMask,
)


def _backend(x):
    return torch if isinstance(x, torch.Tensor) else np


def _check_exposure(exposure_t) -> None:
    if isinstance(exposure_t, torch.Tensor):
        if not bool((exposure_t > 0).all()):
            raise ValueError("노출 시간은 양수여야 합니다.")
    elif not np.all(np.asarray(exposure_t) > 0):
        raise ValueError(f"노출 시간은 양수여야 합니다: exposure_t={exposure_t}")


# ========================================
# 배열 단위 변환
# ========================================

def ldr_to_linear(pixels: ArrayLike, exposure_t, gamma: float = Settings.GAMMA) -> ArrayLike:
    """I = L^γ / t"""
    _check_exposure(exposure_t)
    return pixels ** gamma / exposure_t


def linear_to_ldr(radiance: ArrayLike, exposure_t, gamma: float = Settings.GAMMA) -> ArrayLike:
    """g(I) = clip[(I·t)^(1/γ)] into [0,1]"""
    _check_exposure(exposure_t)
    xp = _backend(radiance)
    scaled = xp.clip(radiance * exposure_t, 0.0, None)
    return xp.clip(scaled ** (1.0 / gamma), 0.0, 1.0)


def mu_law(radiance: ArrayLike, mu: float = Settings.MU) -> ArrayLike:
    """T = log(1 + μH) / log(1 + μ)"""
    if mu <= 0:
        raise ValueError(f"μ 는 양수여야 합니다: mu={mu}")
    xp = _backend(radiance)
    if bool((radiance < 0).any()):
        raise ValueError("μ-law 톤매핑 입력에 음수 radiance가 있습니다.")
    return xp.log1p(mu * radiance) / math.log1p(mu)


def inverse_mu_law(tonemapped: ArrayLike, mu: float = Settings.MU) -> ArrayLike:
    """H = ((1 + μ)^T − 1) / μ"""
    xp = _backend(tonemapped)
    return xp.expm1(tonemapped * math.log1p(mu)) / mu


def reinhard(radiance: ArrayLike, percentile: Optional[float] = Settings.DISPLAY_PERCENTILE) -> ArrayLike:
    """x / (1 + x), percentile 지정 시 해당 분위수를 1로 정규화한 뒤 적용"""
    xp = _backend(radiance)
    scaled = radiance
    if percentile is not None:
        if xp is torch:
            anchor = float(torch.quantile(radiance.detach().flatten().float(), percentile / 100.0))
        else:
            anchor = float(np.percentile(radiance, percentile))
        if anchor > 0:
            scaled = radiance / anchor
    return scaled / (1.0 + scaled)


def well_exposed_weights(pixels: ArrayLike, role: str, channel_axis: int = -1,
                         low_threshold: float = Settings.LOW_EXPOSURE_THRESHOLD,
                         high_threshold: float = Settings.HIGH_EXPOSURE_THRESHOLD) -> ArrayLike:
    """
    기준 LDR 값으로 적정 노출 가중치 계산

    low 역할: L ≥ 0.15 → 1, 그 외 (L/0.15)²
    high 역할: L ≤ 0.9 → 1, 그 외 ((1−L)/(1−0.9))²
    middle 역할: 두 감쇠의 최솟값
    채널 축은 최솟값으로 축약하고 크기 1로 유지한다.
    """
    if role not in ROLES:
        raise ValueError(f"알 수 없는 노출 역할입니다: {role} (가능: {', '.join(ROLES)})")
    xp = _backend(pixels)

    def dark_falloff(x):
        return xp.where(x >= low_threshold, xp.ones_like(x), (x / low_threshold) ** 2)

    def bright_falloff(x):
        return xp.where(x <= high_threshold, xp.ones_like(x), ((1.0 - x) / (1.0 - high_threshold)) ** 2)

    if role == "low":
        weights = dark_falloff(pixels)
    elif role == "high":
        weights = bright_falloff(pixels)
    else:
        weights = xp.minimum(dark_falloff(pixels), bright_falloff(pixels))

    if xp is torch:
        return weights.amin(dim=channel_axis, keepdim=True)
    return weights.min(axis=channel_axis, keepdims=True)


def mask_batch(ldr: torch.Tensor, roles: Sequence[str]) -> torch.Tensor:
    """B×3×H×W 기준 프레임과 샘플별 역할로 B×1×H×W 마스크 생성"""
    if ldr.shape[0] != len(roles):
        raise ValueError(f"역할 개수({len(roles)})가 배치 크기({ldr.shape[0]})와 다릅니다.")
    masks = [well_exposed_weights(ldr[b], role, channel_axis=0) for b, role in enumerate(roles)]
    return torch.stack(masks, dim=0)


# ========================================
# 프레임 단위 연산
# ========================================

def ldr_to_radiance(frame: LdrFrame) -> RadianceFrame:
    """LDR 프레임을 선형 radiance 도메인으로 변환"""
    return RadianceFrame(ldr_to_linear(frame.pixels, frame.exposure_t, frame.gamma))


def radiance_to_ldr(frame: RadianceFrame, exposure_t: float, gamma: float = Settings.GAMMA) -> LdrFrame:
    """radiance를 주어진 노출의 LDR로 재렌더링 (노출 정합 g)"""
    return LdrFrame(linear_to_ldr(frame.pixels, exposure_t, gamma), exposure_t=exposure_t, gamma=gamma)


def mu_tonemap(frame: RadianceFrame, mu: float = Settings.MU) -> TonemappedFrame:
    return TonemappedFrame(mu_law(frame.pixels, mu), mu=mu)


def inverse_mu_tonemap(frame: TonemappedFrame) -> RadianceFrame:
    return RadianceFrame(inverse_mu_law(frame.pixels, frame.mu))


def display_tonemap(frame: RadianceFrame,
                    percentile: Optional[float] = Settings.DISPLAY_PERCENTILE) -> TonemappedFrame:
    """미리보기용 Reinhard 전역 톤매핑 (손실/평가에는 사용하지 않음)"""
    return TonemappedFrame(reinhard(frame.pixels, percentile), mu=0.0)


def well_exposed_mask(frame: LdrFrame, role: str) -> WellExposedMask:
    return WellExposedMask(well_exposed_weights(frame.pixels, role))


def exposure_roles(exposures: Sequence[float]) -> Union[list, None]:
    """
    스케줄 노출값 목록을 역할 목록으로 변환

    가장 작은 노출 → low, 가장 큰 노출 → high, 나머지 → middle
    모든 노출이 같으면 None
    """
    values = [float(t) for t in exposures]
    low, high = min(values), max(values)
    if math.isclose(low, high):
        return None
    roles = []
    for t in values:
        if math.isclose(t, low):
            roles.append("low")
        elif math.isclose(t, high):
            roles.append("high")
        else:
            roles.append("middle")
    return roles
