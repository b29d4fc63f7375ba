#!/usr/bin/env python3
"""
src/harness/reconstructor.py

📋 역할: 슬라이딩 윈도우 HDR 비디오 복원
- 프레임 i 의 최종 출력은 프레임 i−2..i+2 에만 의존
- 경계 처리: 3프레임 윈도우만 가능한 프레임은 coarse 결과, 첫/마지막 프레임은 단일 프레임 radiance
- 선택적 전역 similarity 사전 정렬, 오라클 0 움직임 주입
- use_coarse=False RefineNet: 노출 보정 LDR 3프레임으로 첫/마지막을 제외한 모든 프레임 보정
"""

import logging
import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import torch

from config.settings import Settings
from src.generators.sequence_generator import LdrSequence
from src.harness.config import ConfigurationError, SequenceTooShortError
from src.imaging.frames import LdrFrame, RadianceFrame, to_array, to_tensor
from src.imaging.geometry import align_window
from src.imaging.radiometry import ldr_to_radiance
from src.integrations.checkpoint import LoadedModels
from src.networks.coarsenet import CoarseNet, window_tensors
from src.networks.refinenet import RefineNet, ldr_window_radiance

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

FLAGS = ("refined", "coarse", "single_frame")


@dataclass
class ReconstructedFrame:
    index: int
    radiance: RadianceFrame
    flag: str
    role: str


def minimum_length(period: int) -> int:
    """복원 가능한 최소 시퀀스 길이 (주기 2: 5, 주기 3: 7)"""
    return 5 if period == 2 else 7


def check_length(sequence: LdrSequence) -> None:
    required = minimum_length(sequence.schedule.period)
    if len(sequence) < required:
        raise SequenceTooShortError(
            f"시퀀스가 너무 짧습니다 (sequence too short): {len(sequence)} 프레임, "
            f"주기 {sequence.schedule.period} 는 최소 {required} 프레임 필요"
        )


class VideoReconstructor:
    """CoarseNet + RefineNet 으로 시퀀스 전체를 프레임 단위 복원"""

    def __init__(self, coarse: Optional[CoarseNet], refine: Optional[RefineNet], align: bool = False,
                 zero_motion: bool = False, seed: int = Settings.SEED):
        self.ldr_input = refine is not None and not refine.arch.use_coarse
        if coarse is None and not self.ldr_input:
            raise ConfigurationError("복원에는 CoarseNet 이 필요합니다.")
        self.coarse = coarse.eval() if coarse is not None else None
        self.refine = refine.eval() if refine is not None else None
        self.align = align
        self.zero_motion = zero_motion
        self.seed = seed
        self.runtime_ms_per_frame: Optional[float] = None
        parameter = next((refine if self.ldr_input else coarse).parameters())
        self.dtype, self.device = parameter.dtype, parameter.device

    @classmethod
    def from_models(cls, models: LoadedModels, **kwargs) -> "VideoReconstructor":
        return cls(models.coarse, models.refine, **kwargs)

    def _zero_flows(self, height: int, width: int, batch: int):
        zeros = torch.zeros(batch, 2, height, width, dtype=self.dtype, device=self.device)
        return zeros, zeros

    def _coarse(self, frames: List[LdrFrame]) -> torch.Tensor:
        """연속 3프레임 윈도우들의 coarse HDR (W×3×H×W, W = len(frames) − 2)"""
        ldr, exposures = window_tensors(frames, self.dtype, self.device)
        windows = torch.cat([ldr[:, k:k + 3] for k in range(len(frames) - 2)], dim=0)
        window_exposures = torch.cat([exposures[:, k:k + 3] for k in range(len(frames) - 2)], dim=0)
        flows = None
        if self.zero_motion:
            flows = self._zero_flows(*windows.shape[-2:], windows.shape[0])
        return self.coarse(windows, window_exposures, flows=flows).radiance

    def _zero_offsets(self, height: int, width: int):
        groups = self.refine.arch.deform_groups
        channels = 2 * groups * 9
        pad_h, pad_w = height + (-height) % 4, width + (-width) % 4
        levels = [
            torch.zeros(1, channels, pad_h // 4, pad_w // 4, dtype=self.dtype, device=self.device),
            torch.zeros(1, channels, pad_h // 2, pad_w // 2, dtype=self.dtype, device=self.device),
            torch.zeros(1, channels, pad_h, pad_w, dtype=self.dtype, device=self.device),
            torch.zeros(1, channels, pad_h, pad_w, dtype=self.dtype, device=self.device),
        ]
        return [levels, levels]

    def reconstruct_frame(self, sequence: LdrSequence, index: int) -> ReconstructedFrame:
        """프레임 index 하나 복원"""
        count = len(sequence)
        role = sequence.role_at(index)
        if index == 0 or index == count - 1:
            return ReconstructedFrame(index, ldr_to_radiance(sequence.frames[index]), "single_frame", role)

        if self.ldr_input:
            frames = sequence.frames[index - 1:index + 2]
            if self.align:
                frames = align_window(frames, 1, seed=self.seed)
            ldr, exposures = window_tensors(frames, self.dtype, self.device)
            return self._refine(ldr_window_radiance(ldr, exposures), ldr[:, 1], role, index)

        if index == 1 or index == count - 2 or self.refine is None:
            frames = sequence.frames[index - 1:index + 2]
            if self.align:
                frames = align_window(frames, 1, seed=self.seed)
            radiance = self._coarse(frames)[0]
            return ReconstructedFrame(index, self._to_frame(radiance), "coarse", role)

        frames = sequence.frames[index - 2:index + 3]
        if self.align:
            frames = align_window(frames, 2, seed=self.seed)
        coarse_stack = self._coarse(frames).unsqueeze(0)
        reference = to_tensor(frames[2].pixels, self.dtype).to(self.device)
        return self._refine(coarse_stack, reference, role, index)

    def _refine(self, stack: torch.Tensor, reference: torch.Tensor, role: str, index: int) -> ReconstructedFrame:
        offsets = self._zero_offsets(*reference.shape[-2:]) if self.zero_motion else None
        output = self.refine(stack, reference, roles=[role], offsets=offsets)
        return ReconstructedFrame(index, self._to_frame(output.radiance[0]), "refined", role)

    @staticmethod
    def _to_frame(radiance: torch.Tensor) -> RadianceFrame:
        return RadianceFrame(np.clip(to_array(radiance).astype(np.float32), 0.0, None))

    def reconstruct(self, sequence: LdrSequence) -> List[ReconstructedFrame]:
        check_length(sequence)
        started = time.perf_counter()
        outputs = []
        with torch.no_grad():
            for index in range(len(sequence)):
                outputs.append(self.reconstruct_frame(sequence, index))
        elapsed = time.perf_counter() - started
        self.runtime_ms_per_frame = 1000.0 * elapsed / len(sequence)
        refined = sum(1 for frame in outputs if frame.flag == "refined")
        logger.info(
            f"복원 완료: {len(outputs)} 프레임 (refined {refined}, 경계 {len(outputs) - refined}), "
            f"프레임당 {self.runtime_ms_per_frame:.1f} ms"
        )
        return outputs


def reconstruct_video(models: LoadedModels, sequence: LdrSequence, align: bool = False,
                      zero_motion: bool = False, seed: int = Settings.SEED) -> List[ReconstructedFrame]:
    """체크포인트 모델로 시퀀스 전체 복원"""
    check_length(sequence)
    reconstructor = VideoReconstructor.from_models(models, align=align, zero_motion=zero_motion, seed=seed)
    return reconstructor.reconstruct(sequence)
