#!/usr/bin/env python3
"""
src/integrations/checkpoint.py

📋 역할: 모델 체크포인트 저장/로드
- 파라미터 그룹: coarse / refine (없는 그룹은 None)
- JSON 헤더: 구조 설정, 노출 주기, 학습 단계, step
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

import torch

from config.settings import Settings
from src.networks.coarsenet import CoarseArch, CoarseNet
from src.networks.refinenet import RefineArch, RefineNet

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "hdrv-checkpoint"


@dataclass
class LoadedModels:
    coarse: Optional[CoarseNet]
    refine: Optional[RefineNet]
    header: Dict

    @property
    def period(self) -> int:
        return int(self.header.get("period") or 2)


def save_checkpoint(path: Union[str, Path], coarse: Optional[CoarseNet], refine: Optional[RefineNet],
                    stage: str, step: int, extra: Optional[Dict] = None) -> Path:
    """체크포인트 저장 (헤더는 JSON 문자열로 함께 저장)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": CHECKPOINT_FORMAT,
        "stage": stage,
        "step": int(step),
        "period": coarse.arch.period if coarse is not None else None,
        "coarse_arch": coarse.arch.to_dict() if coarse is not None else None,
        "refine_arch": refine.arch.to_dict() if refine is not None else None,
    }
    if extra:
        header.update(extra)
    payload = {
        "header": json.dumps(header, ensure_ascii=False),
        "coarse": coarse.state_dict() if coarse is not None else None,
        "refine": refine.state_dict() if refine is not None else None,
    }
    try:
        torch.save(payload, path)
    except Exception as e:
        logger.error(f"체크포인트 저장 실패: {path}: {str(e)}")
        raise IOError(f"체크포인트 저장 실패: {path}: {str(e)}")
    logger.info(f"체크포인트 저장: {path} (stage={stage}, step={step})")
    return path


def read_header(path: Union[str, Path]) -> Dict:
    return _read_payload(Path(path))[1]


def _read_payload(path: Path, device: Optional[str] = None):
    if not path.exists():
        raise FileNotFoundError(f"체크포인트 파일이 없습니다: {path}")
    try:
        payload = torch.load(path, map_location=device or "cpu")
        header = json.loads(payload["header"])
    except Exception as e:
        logger.error(f"체크포인트 읽기 실패: {path}: {str(e)}")
        raise IOError(f"체크포인트 읽기 실패: {path}: {str(e)}")
    if header.get("format") != CHECKPOINT_FORMAT:
        raise IOError(f"체크포인트 형식이 아닙니다: {path}")
    return payload, header


def load_checkpoint(path: Union[str, Path], device: Optional[str] = None) -> LoadedModels:
    """체크포인트에서 모델 복원 (eval 모드)"""
    path = Path(path)
    payload, header = _read_payload(path, device)

    coarse = refine = None
    if payload.get("coarse") is not None:
        coarse = CoarseNet(CoarseArch(**header["coarse_arch"]))
        coarse.load_state_dict(payload["coarse"])
        coarse.to(device or "cpu").eval()
    if payload.get("refine") is not None:
        refine = RefineNet(RefineArch(**header["refine_arch"]))
        refine.load_state_dict(payload["refine"])
        refine.to(device or "cpu").eval()
    logger.info(
        f"체크포인트 로드: {path} (stage={header.get('stage')}, step={header.get('step')}, "
        f"coarse={'O' if coarse else 'X'}, refine={'O' if refine else 'X'})"
    )
    return LoadedModels(coarse=coarse, refine=refine, header=header)
