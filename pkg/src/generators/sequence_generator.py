#!/usr/bin/env python3
"""
src/generators/sequence_generator.py

📋 역할: 교차 노출 LDR 시퀀스 합성 및 학습 데이터 증강
- ExposureSchedule: 주기 2/3 교차 노출 스케줄 (EV → 노출 배율)
- LdrSequence / LdrsHdrPair: 시퀀스와 LDRs-HDR 학습 쌍
- synthesize_sequence: HDR 소스 프레임을 스케줄대로 LDR 재렌더링
- augment: 선형 도메인 노이즈, 기준 프레임 톤 교란, 뒤집기/회전, 랜덤 크롭
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from config.settings import Settings
from src.imaging.frames import ROLES, LdrFrame, RadianceFrame
from src.imaging.radiometry import exposure_roles, linear_to_ldr

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)


@dataclass
class ExposureSchedule:
    """주기적 교차 노출 스케줄"""
    period: int
    exposures: List[float]

    def __post_init__(self):
        self.exposures = [float(t) for t in self.exposures]
        if self.period not in (2, 3):
            raise ValueError(f"스케줄 주기는 2 또는 3 이어야 합니다: period={self.period}")
        if len(self.exposures) != self.period:
            raise ValueError(
                f"노출 개수({len(self.exposures)})가 주기({self.period})와 다릅니다."
            )
        if any(t <= 0 for t in self.exposures):
            raise ValueError(f"노출 값은 모두 양수여야 합니다: {self.exposures}")

    @classmethod
    def from_ev(cls, evs: Sequence[float], base: float = 1.0) -> "ExposureSchedule":
        """EV±k → base · 2^(±k)"""
        return cls(period=len(evs), exposures=[base * 2.0 ** float(ev) for ev in evs])

    @classmethod
    def from_preset(cls, name: str) -> "ExposureSchedule":
        if name not in Settings.SCHEDULE_PRESETS:
            raise ValueError(
                f"알 수 없는 스케줄 프리셋입니다: {name} (가능: {', '.join(Settings.SCHEDULE_PRESETS)})"
            )
        return cls.from_ev(Settings.SCHEDULE_PRESETS[name])

    def exposure_at(self, index: int) -> float:
        return self.exposures[index % self.period]

    def role_at(self, index: int) -> str:
        """스케줄 내 노출 순위로 역할 결정 (모든 노출이 같으면 middle)"""
        roles = exposure_roles(self.exposures)
        if roles is None:
            return "middle"
        return roles[index % self.period]

    @property
    def window_radius(self) -> int:
        """LDRs-HDR 쌍의 반경 (5프레임 / 7프레임)"""
        return 2 if self.period == 2 else 3


@dataclass
class LdrSequence:
    """교차 노출 LDR 시퀀스"""
    frames: List[LdrFrame]
    schedule: ExposureSchedule
    targets: Optional[List[RadianceFrame]] = None
    name: str = ""

    def __post_init__(self):
        if not self.frames:
            raise ValueError("시퀀스에 프레임이 없습니다.")
        shapes = {frame.pixels.shape for frame in self.frames}
        if len(shapes) != 1:
            raise ValueError(f"시퀀스 프레임 크기가 서로 다릅니다: {sorted(shapes)}")
        for index, frame in enumerate(self.frames):
            expected = self.schedule.exposure_at(index)
            if not math.isclose(frame.exposure_t, expected, rel_tol=1e-6):
                raise ValueError(
                    f"프레임 {index} 노출({frame.exposure_t})이 스케줄 슬롯({expected})과 다릅니다."
                )
        if self.targets is not None and len(self.targets) != len(self.frames):
            raise ValueError("GT 프레임 개수가 LDR 프레임 개수와 다릅니다.")

    def __len__(self) -> int:
        return len(self.frames)

    def role_at(self, index: int) -> str:
        return self.schedule.role_at(index)


@dataclass
class LdrsHdrPair:
    """중심 프레임 GT HDR을 가진 LDR 윈도우"""
    inputs: LdrSequence
    target: RadianceFrame
    reference_role: str
    source_indices: List[int] = field(default_factory=list)

    def __post_init__(self):
        if len(self.inputs) not in (5, 7):
            raise ValueError(f"LDRs-HDR 쌍의 입력은 5 또는 7 프레임이어야 합니다: {len(self.inputs)}")
        if self.reference_role not in ROLES:
            raise ValueError(f"알 수 없는 기준 노출 역할입니다: {self.reference_role}")
        if self.target.pixels.shape[:2] != self.inputs.frames[0].pixels.shape[:2]:
            raise ValueError(
                f"GT 크기({self.target.pixels.shape[:2]})가 입력 크기"
                f"({self.inputs.frames[0].pixels.shape[:2]})와 다릅니다."
            )

    @property
    def center_index(self) -> int:
        return len(self.inputs) // 2

    @property
    def reference(self) -> LdrFrame:
        return self.inputs.frames[self.center_index]


# ========================================
# 시퀀스 합성
# ========================================

def synthesize_sequence(hdr_frames: Sequence[RadianceFrame], schedule: ExposureSchedule,
                        gamma: float = Settings.GAMMA, name: str = "") -> LdrSequence:
    """HDR 프레임 i 를 schedule[i mod period] 노출의 LDR로 재렌더링"""
    if not hdr_frames:
        raise ValueError("합성할 HDR 프레임이 없습니다.")
    frames = [
        LdrFrame(linear_to_ldr(hdr.pixels, schedule.exposure_at(i), gamma),
                 exposure_t=schedule.exposure_at(i), gamma=gamma)
        for i, hdr in enumerate(hdr_frames)
    ]
    logger.info(f"시퀀스 합성 완료: {len(frames)} 프레임, 노출 {schedule.exposures}")
    return LdrSequence(frames=frames, schedule=schedule, targets=list(hdr_frames), name=name)


# ========================================
# 데이터 증강
# ========================================

@dataclass
class AugmentConfig:
    """데이터 증강 설정"""
    noise_sigma: float = Settings.NOISE_SIGMA
    noise_low_exposure_only: bool = False
    tone_perturb_range: float = Settings.TONE_PERTURB_RANGE
    flip: bool = True
    rotate: bool = True
    crop_size: Optional[int] = Settings.PATCH_SIZE

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError(f"노이즈 표준편차는 음수일 수 없습니다: {self.noise_sigma}")
        if self.tone_perturb_range < 0:
            raise ValueError(f"톤 교란 범위는 음수일 수 없습니다: {self.tone_perturb_range}")
        if self.crop_size is not None and self.crop_size <= 0:
            raise ValueError(f"크롭 크기는 양수여야 합니다: {self.crop_size}")

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(noise_sigma=0.0, tone_perturb_range=0.0, flip=False, rotate=False, crop_size=None)


def add_linear_noise(pixels: np.ndarray, sigma: float, gamma: float,
                     rng: np.random.Generator) -> np.ndarray:
    """
    선형 도메인(L^γ = I·t)에 평균 0 가우시안 노이즈 추가

    radiance 기준으로는 σ/t 이므로 노출이 짧을수록 노이즈가 커진다.
    """
    linear = pixels.astype(np.float64) ** gamma
    noisy = np.clip(linear + rng.normal(0.0, sigma, size=pixels.shape), 0.0, 1.0)
    return (noisy ** (1.0 / gamma)).astype(pixels.dtype)


def _geometric(pixels: np.ndarray, top: int, left: int, height: int, width: int,
               hflip: bool, vflip: bool, turns: int) -> np.ndarray:
    out = pixels[top:top + height, left:left + width]
    if hflip:
        out = out[:, ::-1]
    if vflip:
        out = out[::-1, :]
    if turns:
        out = np.rot90(out, k=turns, axes=(0, 1))
    return np.ascontiguousarray(out)


def augment(pair: LdrsHdrPair, seed: int, config: Optional[AugmentConfig] = None) -> LdrsHdrPair:
    """시드 고정 시 비트 단위로 결정적인 학습 쌍 증강"""
    config = config or AugmentConfig()
    rng = np.random.default_rng(seed)
    height, width = pair.target.pixels.shape[:2]

    # 랜덤 크롭 (프레임이 작으면 전체)
    crop_h = min(config.crop_size or height, height)
    crop_w = min(config.crop_size or width, width)
    top = int(rng.integers(0, height - crop_h + 1))
    left = int(rng.integers(0, width - crop_w + 1))

    # 뒤집기 / 90도 회전 (모든 프레임과 GT에 동일 적용)
    hflip = bool(rng.random() < 0.5) if config.flip else False
    vflip = bool(rng.random() < 0.5) if config.flip else False
    turns = int(rng.integers(0, 4)) if config.rotate else 0

    def geometric(pixels):
        return _geometric(pixels, top, left, crop_h, crop_w, hflip, vflip, turns)

    low_exposure = min(frame.exposure_t for frame in pair.inputs.frames)
    frames = []
    for index, frame in enumerate(pair.inputs.frames):
        pixels = geometric(frame.pixels)
        add_noise = config.noise_sigma > 0 and (
            not config.noise_low_exposure_only or math.isclose(frame.exposure_t, low_exposure)
        )
        if add_noise:
            pixels = add_linear_noise(pixels, config.noise_sigma, frame.gamma, rng)
        if index == pair.center_index and config.tone_perturb_range > 0:
            d = rng.uniform(-config.tone_perturb_range, config.tone_perturb_range)
            pixels = (pixels ** math.exp(d)).astype(pixels.dtype)
        frames.append(replace(frame, pixels=pixels))

    inputs = replace(pair.inputs, frames=frames, targets=None)
    target = RadianceFrame(geometric(pair.target.pixels))
    return replace(pair, inputs=inputs, target=target)
