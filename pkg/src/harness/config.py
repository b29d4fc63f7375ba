#!/usr/bin/env python3
"""
src/harness/config.py

📋 역할: 학습 설정과 하네스 예외
- TrainConfig: 단계별(coarse / refine / finetune) 기본값과 JSON 로드/저장
- ConfigurationError / SequenceTooShortError
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, Optional, Union

from config.settings import Settings
from src.generators.sequence_generator import AugmentConfig
from src.networks.coarsenet import CoarseArch
from src.networks.refinenet import RefineArch

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

STAGES = ("coarse", "refine", "finetune")

STAGE_DEFAULTS = {
    "coarse": {"epochs": 10, "batch_size": 16, "learning_rate": 1e-4},
    "refine": {"epochs": 15, "batch_size": 8, "learning_rate": 1e-4},
    "finetune": {"epochs": 2, "batch_size": 8, "learning_rate": 2e-5},
}


class ConfigurationError(ValueError):
    """학습/복원 설정 오류 (선행 체크포인트 누락, 잘못된 단계 등)"""


class SequenceTooShortError(ValueError):
    """슬라이딩 윈도우 복원에 필요한 프레임 수 부족"""


@dataclass
class TrainConfig:
    """단계별 학습 설정"""
    stage: str = "coarse"
    epochs: int = 10
    batch_size: int = 16
    learning_rate: float = 1e-4
    lr_halving_period_epochs: int = 5
    seed: int = Settings.SEED
    device: str = Settings.DEVICE
    max_steps: Optional[int] = None
    num_workers: int = 0
    pair_strides: list = field(default_factory=lambda: [1])
    perceptual: str = Settings.PERCEPTUAL_EXTRACTOR
    coarse_arch: CoarseArch = field(default_factory=CoarseArch)
    refine_arch: RefineArch = field(default_factory=RefineArch)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ConfigurationError(f"알 수 없는 학습 단계입니다: {self.stage} (가능: {', '.join(STAGES)})")
        if isinstance(self.coarse_arch, dict):
            self.coarse_arch = CoarseArch(**self.coarse_arch)
        if isinstance(self.refine_arch, dict):
            self.refine_arch = RefineArch(**self.refine_arch)
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig(**self.augment)
        for name in ("epochs", "batch_size", "lr_halving_period_epochs"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} 는 양수여야 합니다: {getattr(self, name)}")
        if not self.learning_rate > 0:
            raise ValueError(f"학습률은 양수여야 합니다: {self.learning_rate}")
        if self.max_steps is not None and self.max_steps <= 0:
            raise ValueError(f"max_steps 는 양수여야 합니다: {self.max_steps}")
        if self.num_workers < 0:
            raise ValueError(f"num_workers 는 음수일 수 없습니다: {self.num_workers}")

    @classmethod
    def for_stage(cls, stage: str, **overrides) -> "TrainConfig":
        """단계 기본값 (coarse 10 epoch/배치 16, refine 15/8, finetune 2 epoch 학습률 2e-5)"""
        if stage not in STAGE_DEFAULTS:
            raise ConfigurationError(f"알 수 없는 학습 단계입니다: {stage} (가능: {', '.join(STAGES)})")
        values = dict(STAGE_DEFAULTS[stage])
        values.update(overrides)
        return cls(stage=stage, **values)

    def learning_rate_at(self, epoch: int) -> float:
        """epoch 시점 학습률 (lr_halving_period_epochs 마다 절반)"""
        return self.learning_rate * 0.5 ** (epoch // self.lr_halving_period_epochs)

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"알 수 없는 설정 항목입니다: {', '.join(unknown)}")
        stage = data.get("stage", "coarse")
        values = {k: v for k, v in data.items() if k != "stage"}
        try:
            return cls.for_stage(stage, **values)
        except TypeError as e:
            raise ConfigurationError(f"설정 형식 오류: {str(e)}")


def load_config(path: Union[str, Path]) -> TrainConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"설정 파일이 없습니다: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"설정 파일 JSON 파싱 실패: {path}: {str(e)}")
    config = TrainConfig.from_dict(data)
    logger.info(f"설정 로드: {path} (stage={config.stage})")
    return config


def save_config(config: TrainConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, ensure_ascii=False, indent=2)
    return path
