#!/usr/bin/env python3
"""
src/harness/trainer.py

📋 역할: 단계별 학습 루프
- PairDataset: LDRs-HDR 쌍 → 증강된 텐서 샘플 (epoch·index 별 결정적 시드)
- coarse_windows: 5프레임 윈도우에서 H^c_{i−1}, H^c_i, H^c_{i+1} 계산
- train_stage: Adam + epoch 단위 학습률 반감, 체크포인트 / 학습 곡선 CSV 기록
- refine_arch.use_coarse=False: CoarseNet 없이 노출 보정 LDR 윈도우로 RefineNet 학습
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch
from torch.utils.data import DataLoader, Dataset

from config.settings import Settings
from src.generators.sequence_generator import AugmentConfig, LdrsHdrPair, augment
from src.harness.config import ConfigurationError, TrainConfig
from src.imaging.radiometry import mask_batch
from src.integrations.checkpoint import load_checkpoint, save_checkpoint
from src.integrations.manifest import DatasetManifest, load_pairs
from src.networks.coarsenet import CoarseNet
from src.networks.losses import build_perceptual_extractor, coarse_loss, finetune_loss, refine_loss
from src.networks.refinenet import RefineNet, ldr_window_radiance

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

CONTEXT_FRAMES = 5


class PairDataset(Dataset):
    """학습 쌍 데이터셋 (7프레임 쌍은 중심 5프레임 사용)"""

    def __init__(self, pairs: Sequence[LdrsHdrPair], augment_config: Optional[AugmentConfig] = None,
                 seed: int = Settings.SEED):
        if not pairs:
            raise ValueError("학습 쌍이 없습니다.")
        self.pairs = list(pairs)
        self.augment_config = augment_config or AugmentConfig()
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, index: int) -> Dict:
        sample_seed = int(np.random.SeedSequence([self.seed, self.epoch, index]).generate_state(1)[0])
        pair = augment(self.pairs[index], sample_seed, self.augment_config)
        center = pair.center_index
        frames = pair.inputs.frames[center - 2:center + 3]
        ldr = np.stack([frame.pixels.transpose(2, 0, 1) for frame in frames]).astype(np.float32)
        return {
            "ldr": torch.from_numpy(np.ascontiguousarray(ldr)),
            "exposures": torch.tensor([frame.exposure_t for frame in frames], dtype=torch.float32),
            "target": torch.from_numpy(np.ascontiguousarray(pair.target.pixels.transpose(2, 0, 1))).float(),
            "role": pair.reference_role,
        }


def coarse_windows(coarse: CoarseNet, ldr: torch.Tensor, exposures: torch.Tensor) -> torch.Tensor:
    """
    5프레임 윈도우 (i−2..i+2) → coarse HDR 3장 (B×3×3×H×W)

    세 개의 3프레임 윈도우를 배치 차원으로 묶어 한 번에 계산한다.
    """
    if ldr.shape[1] != CONTEXT_FRAMES:
        raise ValueError(f"coarse 윈도우 계산에는 5프레임이 필요합니다: shape={tuple(ldr.shape)}")
    batch = ldr.shape[0]
    windows = torch.cat([ldr[:, k:k + 3] for k in range(3)], dim=0)
    window_exposures = torch.cat([exposures[:, k:k + 3] for k in range(3)], dim=0)
    radiance = coarse(windows, window_exposures).radiance
    return radiance.reshape(3, batch, *radiance.shape[1:]).transpose(0, 1)


@dataclass
class TrainResult:
    """학습 결과"""
    checkpoint: Path
    losses: List[float] = field(default_factory=list)
    curve_path: Optional[Path] = None
    steps: int = 0


def _build_models(config: TrainConfig, init_checkpoint: Optional[Union[str, Path]]):
    coarse = refine = None
    if init_checkpoint is not None:
        loaded = load_checkpoint(init_checkpoint, config.device)
        coarse, refine = loaded.coarse, loaded.refine

    if config.stage == "finetune" and refine is None:
        raise ConfigurationError("finetune 단계에는 RefineNet 이 포함된 체크포인트가 필요합니다.")
    if refine is None and config.stage == "refine":
        refine = RefineNet(config.refine_arch)
    uses_coarse = config.stage == "coarse" or refine.arch.use_coarse
    if config.stage == "finetune" and not uses_coarse:
        raise ConfigurationError("CoarseNet 없이 학습한 RefineNet 은 finetune 단계를 지원하지 않습니다.")
    if config.stage != "coarse" and uses_coarse and coarse is None:
        raise ConfigurationError(f"{config.stage} 단계에는 CoarseNet 체크포인트가 필요합니다.")

    if coarse is None and uses_coarse:
        coarse = CoarseNet(config.coarse_arch)
    if coarse is not None:
        coarse = coarse.to(config.device)
    return coarse, (refine.to(config.device) if refine is not None else None)


def _trainable_parameters(config: TrainConfig, coarse: Optional[CoarseNet], refine: Optional[RefineNet]):
    if config.stage == "coarse":
        coarse.train()
        return list(coarse.parameters())
    if config.stage == "refine":
        if coarse is not None:
            coarse.eval()
            coarse.requires_grad_(False)
        refine.train()
        return list(refine.parameters())
    coarse.requires_grad_(True)
    coarse.train()
    refine.train()
    return list(coarse.parameters()) + list(refine.parameters())


def compute_loss(config: TrainConfig, coarse: Optional[CoarseNet], refine: Optional[RefineNet], batch: Dict,
                 extractor=None) -> torch.Tensor:
    """배치 하나의 단계별 손실"""
    ldr = batch["ldr"].to(config.device)
    exposures = batch["exposures"].to(config.device)
    target = batch["target"].to(config.device)

    if config.stage == "coarse":
        prediction = coarse(ldr[:, 1:4], exposures[:, 1:4]).radiance
        return coarse_loss(prediction, target)

    if not refine.arch.use_coarse:
        coarse_stack = ldr_window_radiance(ldr[:, 1:4], exposures[:, 1:4])
    elif config.stage == "refine":
        with torch.no_grad():
            coarse_stack = coarse_windows(coarse, ldr, exposures)
    else:
        coarse_stack = coarse_windows(coarse, ldr, exposures)

    reference = ldr[:, 2]
    mask = mask_batch(reference, list(batch["role"]))
    output = refine(coarse_stack, reference, mask=mask)
    if config.stage == "refine":
        return refine_loss(output.radiance, target, mask, extractor)
    return finetune_loss(output.radiance, target, mask, coarse_stack[:, 1], extractor)


def train_stage(config: TrainConfig, dataset: Union[DatasetManifest, Sequence[LdrsHdrPair]],
                output_dir: Union[str, Path], init_checkpoint: Optional[Union[str, Path]] = None) -> TrainResult:
    """
    한 학습 단계 실행

    Args:
        config: 학습 설정
        dataset: 매니페스트 또는 LDRs-HDR 쌍 목록
        output_dir: 체크포인트 / 학습 곡선 저장 디렉터리
        init_checkpoint: refine 단계는 CoarseNet (use_coarse=False 면 불필요), finetune 단계는 두 모델 모두 포함해야 함

    Returns:
        TrainResult (최종 체크포인트 경로, step 별 손실)
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(config.seed)
    torch.use_deterministic_algorithms(True, warn_only=True)

    coarse, refine = _build_models(config, init_checkpoint)
    parameters = _trainable_parameters(config, coarse, refine)
    extractor = build_perceptual_extractor(config.perceptual) if config.stage != "coarse" else None

    pairs = load_pairs(dataset, strides=config.pair_strides) if isinstance(dataset, DatasetManifest) else dataset
    data = PairDataset(pairs, config.augment, config.seed)
    loader = DataLoader(
        data, batch_size=config.batch_size, shuffle=True, num_workers=config.num_workers,
        generator=torch.Generator().manual_seed(config.seed), drop_last=False,
    )

    optimizer = torch.optim.Adam(parameters, lr=config.learning_rate, betas=(0.9, 0.999), eps=1e-8)
    scheduler = torch.optim.lr_scheduler.StepLR(optimizer, step_size=config.lr_halving_period_epochs, gamma=0.5)

    logger.info(
        f"학습 시작: stage={config.stage}, 쌍 {len(data)}개, epochs={config.epochs}, "
        f"batch={config.batch_size}, lr={config.learning_rate}"
    )
    records, losses = [], []
    step = 0
    finished = False
    checkpoint_path = output_dir / f"{config.stage}.pt"
    for epoch in range(config.epochs):
        data.set_epoch(epoch)
        learning_rate = optimizer.param_groups[0]["lr"]
        for batch in loader:
            optimizer.zero_grad()
            loss = compute_loss(config, coarse, refine, batch, extractor)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"손실이 유한하지 않습니다: stage={config.stage}, step={step}, loss={loss.item()}")
            loss.backward()
            optimizer.step()

            value = float(loss.item())
            losses.append(value)
            records.append({"stage": config.stage, "epoch": epoch, "step": step, "loss": value, "lr": learning_rate})
            step += 1
            if config.max_steps is not None and step >= config.max_steps:
                finished = True
                break

        scheduler.step()
        epoch_losses = [r["loss"] for r in records if r["epoch"] == epoch]
        if epoch_losses:
            logger.info(f"[{config.stage}] epoch {epoch + 1}/{config.epochs} 평균 손실 {np.mean(epoch_losses):.6f}")
        save_checkpoint(output_dir / f"{config.stage}_epoch{epoch + 1:03d}.pt", coarse, refine, config.stage, step)
        if finished:
            break

    save_checkpoint(checkpoint_path, coarse, refine, config.stage, step,
                    extra={"seed": config.seed, "final_loss": losses[-1] if losses else math.nan})
    curve_path = output_dir / f"training_curve_{config.stage}.csv"
    pd.DataFrame.from_records(records, columns=["stage", "epoch", "step", "loss", "lr"]).to_csv(curve_path, index=False)
    logger.info(f"학습 완료: {step} step, 체크포인트 {checkpoint_path}")
    return TrainResult(checkpoint=checkpoint_path, losses=losses, curve_path=curve_path, steps=step)
