#!/usr/bin/env python3
"""
src/analyzers/evaluator.py

📋 역할: 복원 결과 평가
- μ-law 톤매핑 도메인 PSNR (peak 1, MSE 0 이면 상한값)
- 기준 노출 역할(low / middle / high)별 / 전체 평균
- EvalReport JSON 저장/로드, pandas 표 변환, matplotlib 막대 그래프
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from config.settings import Settings
from src.imaging.frames import ROLES, RadianceFrame
from src.imaging.radiometry import mu_law

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)


def psnr_mu(pred: np.ndarray, gt: np.ndarray, mu: float = Settings.MU,
            cap: float = Settings.PSNR_CAP_DB) -> float:
    """10·log10(1 / MSE) between μ-law images"""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"예측과 GT 크기가 다릅니다: {pred.shape} vs {gt.shape}")
    mse = float(np.mean((mu_law(pred, mu) - mu_law(gt, mu)) ** 2))
    if mse == 0.0:
        return float(cap)
    return float(min(cap, 10.0 * math.log10(1.0 / mse)))


@dataclass
class FrameScore:
    index: int
    role: str
    psnr_mu: float


@dataclass
class EvalReport:
    """프레임별 PSNR 과 역할별 평균"""
    frames: List[FrameScore] = field(default_factory=list)
    aggregates: Dict[str, Optional[float]] = field(default_factory=dict)
    runtime_ms_per_frame: Optional[float] = None

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "EvalReport":
        return cls(
            frames=[FrameScore(**f) for f in data.get("frames", [])],
            aggregates=dict(data.get("aggregates", {})),
            runtime_ms_per_frame=data.get("runtime_ms_per_frame"),
        )

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, ensure_ascii=False, indent=2)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EvalReport":
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                return cls.from_dict(json.load(f))
        except (OSError, json.JSONDecodeError, TypeError) as e:
            raise IOError(f"평가 리포트 읽기 실패: {path}: {str(e)}")


def aggregate_scores(scores: Sequence[FrameScore]) -> Dict[str, Optional[float]]:
    aggregates: Dict[str, Optional[float]] = {}
    for role in ROLES:
        members = [s.psnr_mu for s in scores if s.role == role]
        aggregates[role] = float(np.mean(members)) if members else None
    aggregates["all"] = float(np.mean([s.psnr_mu for s in scores])) if scores else None
    return aggregates


def evaluate(preds: Sequence[RadianceFrame], gts: Sequence[RadianceFrame], roles: Sequence[str],
             runtime_ms_per_frame: Optional[float] = None, indices: Optional[Sequence[int]] = None) -> EvalReport:
    """
    예측/GT 프레임 평가

    Args:
        roles: 프레임별 기준 노출 역할 (스케줄에서 결정)
    """
    if not (len(preds) == len(gts) == len(roles)):
        raise ValueError(f"예측({len(preds)}), GT({len(gts)}), 역할({len(roles)}) 개수가 다릅니다.")
    for role in roles:
        if role not in ROLES:
            raise ValueError(f"알 수 없는 노출 역할입니다: {role}")
    indices = list(indices) if indices is not None else list(range(len(preds)))
    scores = [
        FrameScore(index=int(i), role=role, psnr_mu=psnr_mu(pred.pixels, gt.pixels))
        for i, pred, gt, role in zip(indices, preds, gts, roles)
    ]
    report = EvalReport(frames=scores, aggregates=aggregate_scores(scores),
                        runtime_ms_per_frame=runtime_ms_per_frame)
    logger.info(f"평가 완료: {len(scores)} 프레임, 평균 PSNR-μ {report.aggregates['all']}")
    return report


def report_to_dataframe(report: EvalReport) -> pd.DataFrame:
    return pd.DataFrame([asdict(s) for s in report.frames], columns=["index", "role", "psnr_mu"])


def aggregates_to_dataframe(report: EvalReport) -> pd.DataFrame:
    return pd.DataFrame(
        [{"group": k, "psnr_mu": v} for k, v in report.aggregates.items()], columns=["group", "psnr_mu"]
    )


def plot_report(report: EvalReport, path: Union[str, Path]) -> Path:
    """프레임별 PSNR 막대 그래프 (역할별 색상)"""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = report_to_dataframe(report)
    colors = {"low": "tab:blue", "middle": "tab:green", "high": "tab:orange"}
    fig, ax = plt.subplots(figsize=(max(6, len(table) * 0.3), 4))
    ax.bar(table["index"], table["psnr_mu"], color=[colors[r] for r in table["role"]])
    ax.set_xlabel("frame")
    ax.set_ylabel("PSNR-μ (dB)")
    if report.aggregates.get("all") is not None:
        ax.axhline(report.aggregates["all"], color="black", linestyle="--", linewidth=1)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
