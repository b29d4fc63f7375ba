#!/usr/bin/env python3
"""
src/generators/dataset_builder.py

📋 역할: 실측 데이터셋 조립 수학
- merge_static_gt: 정적 장면 다중 노출 스택 → GT HDR (동일 노출 평균 + 삼각 가중 병합)
- build_dynamic_pairs: 정지 중심 프레임 기준 stride 1 / stride 2 LDRs-HDR 쌍 생성
- build_synthetic_pairs: 합성 시퀀스의 모든 유효 중심에 대한 학습 쌍 생성
"""

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np

from config.settings import Settings
from src.generators.sequence_generator import ExposureSchedule, LdrSequence, LdrsHdrPair
from src.imaging.frames import LdrFrame, RadianceFrame
from src.imaging.radiometry import ldr_to_linear

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)


def triangle_weight(pixels: np.ndarray) -> np.ndarray:
    """Λ(L) = 1 − |2L − 1|, L∈{0,1} 에서 0"""
    return np.clip(1.0 - np.abs(2.0 * pixels - 1.0), 0.0, 1.0)


def merge_static_gt(stacks: Sequence[Tuple[float, List[LdrFrame]]]) -> RadianceFrame:
    """
    정적 장면 다중 노출 스택을 GT HDR로 병합

    Args:
        stacks: (노출 시간, 해당 노출 프레임 목록) 목록

    Returns:
        병합된 RadianceFrame. 모든 가중치가 0인 픽셀은 LDR 값이 0.5에
        가장 가까운 노출의 radiance를 사용한다.
    """
    exposures = sorted({float(t) for t, _ in stacks})
    if len(exposures) < 2:
        raise ValueError(f"서로 다른 노출이 2개 이상 필요합니다: {exposures}")

    averaged_ldr, radiances = [], []
    for exposure_t, frames in stacks:
        if not frames:
            raise ValueError(f"노출 {exposure_t} 에 프레임이 없습니다.")
        for frame in frames:
            if not math.isclose(frame.exposure_t, exposure_t, rel_tol=1e-6):
                raise ValueError(f"프레임 노출({frame.exposure_t})이 스택 노출({exposure_t})과 다릅니다.")
        mean_ldr = np.mean([frame.pixels.astype(np.float64) for frame in frames], axis=0)
        averaged_ldr.append(mean_ldr)
        radiances.append(ldr_to_linear(mean_ldr, exposure_t, frames[0].gamma))

    ldr = np.stack(averaged_ldr, axis=0)
    radiance = np.stack(radiances, axis=0)
    weights = triangle_weight(ldr)
    weight_sum = weights.sum(axis=0)

    merged = np.divide((weights * radiance).sum(axis=0), weight_sum,
                       out=np.zeros_like(weight_sum), where=weight_sum > 0)

    # 모든 노출이 0/1 로 잘린 픽셀
    nearest = np.argmin(np.abs(ldr - 0.5), axis=0)
    fallback = np.take_along_axis(radiance, nearest[None], axis=0)[0]
    unresolved = weight_sum <= 0
    if unresolved.any():
        logger.debug(f"가중치 0 픽셀 {int(unresolved.sum())}개를 중간값 근접 노출로 대체합니다.")
    merged = np.where(unresolved, fallback, merged)
    return RadianceFrame(merged)


def _window_indices(center: int, radius: int, stride: int) -> List[int]:
    return [center + stride * k for k in range(-radius, radius + 1)]


def _pair_from_indices(sequence: LdrSequence, indices: List[int], gt: RadianceFrame,
                       center: int) -> LdrsHdrPair:
    frames = [sequence.frames[i] for i in indices]
    period = sequence.schedule.period
    schedule = ExposureSchedule(period=period, exposures=[frame.exposure_t for frame in frames[:period]])
    if len({round(frame.exposure_t, 9) for frame in frames}) == 1:
        logger.warning(f"중심 {center} 윈도우 {indices} 는 단일 노출입니다.")
    inputs = LdrSequence(frames=frames, schedule=schedule, name=sequence.name)
    return LdrsHdrPair(inputs=inputs, target=gt, reference_role=sequence.role_at(center),
                       source_indices=indices)


def build_dynamic_pairs(sequence: LdrSequence, static_center_index: int, gt: RadianceFrame,
                        strides: Sequence[int] = (1, 2)) -> List[LdrsHdrPair]:
    """
    정지 중심 프레임에 대해 stride 별 LDRs-HDR 쌍 생성

    시퀀스 범위를 벗어나는 stride 는 경고 후 건너뛴다.
    """
    radius = sequence.schedule.window_radius
    pairs = []
    for stride in strides:
        indices = _window_indices(static_center_index, radius, stride)
        if indices[0] < 0 or indices[-1] >= len(sequence):
            logger.warning(
                f"이웃 프레임 부족으로 건너뜀: 중심 {static_center_index}, stride {stride}, "
                f"시퀀스 길이 {len(sequence)}"
            )
            continue
        pairs.append(_pair_from_indices(sequence, indices, gt, static_center_index))
    return pairs


def build_synthetic_pairs(sequence: LdrSequence, strides: Sequence[int] = (1,)) -> List[LdrsHdrPair]:
    """합성 시퀀스(프레임별 GT 보유)의 모든 유효 중심에 대해 쌍 생성"""
    if sequence.targets is None:
        raise ValueError("합성 쌍 생성에는 프레임별 GT가 필요합니다.")
    radius = sequence.schedule.window_radius
    pairs = []
    for stride in strides:
        for center in range(radius * stride, len(sequence) - radius * stride):
            indices = _window_indices(center, radius, stride)
            pairs.append(_pair_from_indices(sequence, indices, sequence.targets[center], center))
    logger.info(f"합성 학습 쌍 {len(pairs)}개 생성 (strides={list(strides)})")
    return pairs
