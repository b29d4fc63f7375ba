#!/usr/bin/env python3
"""
src/imaging/frames.py

📋 역할: 프레임 단위 도메인 타입 정의
- LdrFrame: 감마 인코딩된 [0,1] LDR 영상 + 노출 시간 + 감마
- RadianceFrame: 선형 방사 휘도(radiance) 영상
- TonemappedFrame: μ-law / 디스플레이 톤매핑 결과
- WellExposedMask: 기준 프레임의 적정 노출 가중치 (H×W×1)
- FlowField: 픽셀 단위 (dx, dy) 변위 맵
- numpy / torch 변환 유틸리티
"""

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import torch

from config.settings import Settings

ArrayLike = Union[np.ndarray, torch.Tensor]

ROLES = ("low", "middle", "high")


def _as_float_array(pixels) -> np.ndarray:
    array = np.asarray(pixels)
    if not np.issubdtype(array.dtype, np.floating):
        array = array.astype(np.float32)
    return array


def _check_image(array: np.ndarray, channels: Union[int, None], name: str):
    if array.ndim != 3:
        raise ValueError(f"{name} 는 H×W×C 배열이어야 합니다: shape={array.shape}")
    if channels is not None and array.shape[2] != channels:
        raise ValueError(f"{name} 채널 수는 {channels} 이어야 합니다: shape={array.shape}")


@dataclass
class LdrFrame:
    """감마 인코딩 LDR 프레임"""
    pixels: np.ndarray
    exposure_t: float
    gamma: float = Settings.GAMMA

    def __post_init__(self):
        self.pixels = _as_float_array(self.pixels)
        _check_image(self.pixels, None, "LdrFrame.pixels")
        if not self.exposure_t > 0:
            raise ValueError(f"노출 시간은 양수여야 합니다: exposure_t={self.exposure_t}")
        if not self.gamma > 0:
            raise ValueError(f"감마는 양수여야 합니다: gamma={self.gamma}")
        if self.pixels.size and (self.pixels.min() < 0 or self.pixels.max() > 1):
            raise ValueError(
                f"LDR 픽셀 값은 [0,1] 범위여야 합니다: "
                f"min={self.pixels.min():.4f}, max={self.pixels.max():.4f}"
            )

    @property
    def shape(self):
        return self.pixels.shape


@dataclass
class RadianceFrame:
    """선형 방사 휘도 프레임"""
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = _as_float_array(self.pixels)
        _check_image(self.pixels, None, "RadianceFrame.pixels")
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("방사 휘도 프레임에 NaN/Inf 값이 있습니다.")
        if self.pixels.size and self.pixels.min() < 0:
            raise ValueError(f"방사 휘도는 음수가 될 수 없습니다: min={self.pixels.min()}")

    @property
    def shape(self):
        return self.pixels.shape


@dataclass
class TonemappedFrame:
    """톤매핑된 프레임 (mu=0 은 디스플레이 톤매핑, [0,1] 범위)"""
    pixels: np.ndarray
    mu: float = Settings.MU

    def __post_init__(self):
        self.pixels = _as_float_array(self.pixels)
        _check_image(self.pixels, None, "TonemappedFrame.pixels")
        if not self.mu >= 0:
            raise ValueError(f"μ 는 음수일 수 없습니다: mu={self.mu}")
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("톤매핑 프레임에 NaN/Inf 값이 있습니다.")
        upper = 1.0 if self.mu == 0 else np.inf
        if self.pixels.size and (self.pixels.min() < 0 or self.pixels.max() > upper):
            raise ValueError(
                f"톤매핑 픽셀 값이 범위를 벗어났습니다 (mu={self.mu}): "
                f"min={self.pixels.min():.4f}, max={self.pixels.max():.4f}"
            )

    @property
    def shape(self):
        return self.pixels.shape


@dataclass
class WellExposedMask:
    """적정 노출 마스크 (H×W×1, [0,1])"""
    weights: np.ndarray

    def __post_init__(self):
        self.weights = _as_float_array(self.weights)
        _check_image(self.weights, 1, "WellExposedMask.weights")
        if self.weights.size and (self.weights.min() < 0 or self.weights.max() > 1):
            raise ValueError("마스크 가중치는 [0,1] 범위여야 합니다.")


@dataclass
class FlowField:
    """광류 변위 맵 (H×W×2, 픽셀 단위 (dx, dy))"""
    displacements: np.ndarray

    def __post_init__(self):
        self.displacements = _as_float_array(self.displacements)
        _check_image(self.displacements, 2, "FlowField.displacements")
        if not np.all(np.isfinite(self.displacements)):
            raise ValueError("광류에 NaN/Inf 값이 있습니다.")

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width, 2), dtype=np.float64))


# ========================================
# numpy <-> torch 변환
# ========================================

def to_tensor(pixels: np.ndarray, dtype: torch.dtype = None) -> torch.Tensor:
    """H×W×C 배열을 1×C×H×W 텐서로 변환"""
    tensor = torch.from_numpy(np.ascontiguousarray(pixels)).permute(2, 0, 1).unsqueeze(0)
    if dtype is not None:
        tensor = tensor.to(dtype)
    return tensor


def to_array(tensor: torch.Tensor) -> np.ndarray:
    """1×C×H×W (또는 C×H×W) 텐서를 H×W×C 배열로 변환"""
    if tensor.dim() == 4:
        if tensor.shape[0] != 1:
            raise ValueError(f"배치 크기 1 텐서만 변환할 수 있습니다: shape={tuple(tensor.shape)}")
        tensor = tensor[0]
    return tensor.detach().permute(1, 2, 0).cpu().numpy()


def stack_frames(frames: Sequence, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """프레임 목록을 1×N×C×H×W 텐서로 쌓기"""
    shapes = {frame.pixels.shape for frame in frames}
    if len(shapes) != 1:
        raise ValueError(f"프레임 크기가 서로 다릅니다: {sorted(shapes)}")
    return torch.stack([to_tensor(frame.pixels, dtype)[0] for frame in frames], dim=0).unsqueeze(0)

