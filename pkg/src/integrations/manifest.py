#!/usr/bin/env python3
"""
src/integrations/manifest.py

📋 역할: 데이터셋 매니페스트 (JSON)
- 시퀀스별 프레임 경로 / 노출 시간 / 프레임별 GT 경로
- 정적 중심 프레임 기반 LDRs-HDR 쌍 정의 (center, stride, gt)
- 매니페스트 → LdrSequence / LdrsHdrPair 로딩
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from config.settings import Settings
from src.generators.dataset_builder import build_dynamic_pairs, build_synthetic_pairs
from src.generators.sequence_generator import ExposureSchedule, LdrSequence, LdrsHdrPair
from src.integrations.frame_io import read_hdr_frame, read_ldr_frame

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)


@dataclass
class FrameEntry:
    path: str
    exposure: float
    gt: Optional[str] = None


@dataclass
class PairEntry:
    center: int
    stride: int
    gt: str


@dataclass
class SequenceEntry:
    """매니페스트의 시퀀스 항목"""
    name: str
    period: int
    exposures: List[float]
    frames: List[FrameEntry] = field(default_factory=list)
    pairs: List[PairEntry] = field(default_factory=list)

    def __post_init__(self):
        self.frames = [f if isinstance(f, FrameEntry) else FrameEntry(**f) for f in self.frames]
        self.pairs = [p if isinstance(p, PairEntry) else PairEntry(**p) for p in self.pairs]
        # 스케줄 검증
        self.schedule

    @property
    def schedule(self) -> ExposureSchedule:
        return ExposureSchedule(period=self.period, exposures=self.exposures)

    @property
    def roles(self) -> List[str]:
        return [self.schedule.role_at(i) for i in range(len(self.frames))]


@dataclass
class DatasetManifest:
    """데이터셋 매니페스트 (경로는 매니페스트 파일 기준 상대 경로)"""
    sequences: List[SequenceEntry] = field(default_factory=list)
    schema_version: int = Settings.MANIFEST_SCHEMA_VERSION
    root: Optional[Path] = None

    def __post_init__(self):
        self.sequences = [s if isinstance(s, SequenceEntry) else SequenceEntry(**s) for s in self.sequences]
        if self.schema_version != Settings.MANIFEST_SCHEMA_VERSION:
            raise ValueError(
                f"지원하지 않는 매니페스트 버전입니다: {self.schema_version} "
                f"(지원: {Settings.MANIFEST_SCHEMA_VERSION})"
            )

    def get(self, name: Optional[str] = None) -> SequenceEntry:
        if not self.sequences:
            raise ValueError("매니페스트에 시퀀스가 없습니다.")
        if name is None:
            return self.sequences[0]
        for entry in self.sequences:
            if entry.name == name:
                return entry
        raise ValueError(f"매니페스트에 시퀀스가 없습니다: {name}")

    def resolve(self, relative: str) -> Path:
        path = Path(relative)
        if path.is_absolute() or self.root is None:
            return path
        return self.root / path

    def to_dict(self) -> Dict:
        return {
            "schema_version": self.schema_version,
            "sequences": [asdict(entry) for entry in self.sequences],
        }


def save_manifest(manifest: DatasetManifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(manifest.to_dict(), f, ensure_ascii=False, indent=2)
    except OSError as e:
        logger.error(f"매니페스트 저장 실패: {path}: {str(e)}")
        raise IOError(f"매니페스트 저장 실패: {path}: {str(e)}")
    logger.info(f"매니페스트 저장: {path} (시퀀스 {len(manifest.sequences)}개)")
    return path


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"매니페스트 파일이 없습니다: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise IOError(f"매니페스트 JSON 파싱 실패: {path}: {str(e)}")
    try:
        manifest = DatasetManifest(
            sequences=data.get("sequences", []),
            schema_version=data.get("schema_version", Settings.MANIFEST_SCHEMA_VERSION),
        )
    except TypeError as e:
        raise ValueError(f"매니페스트 형식 오류: {path}: {str(e)}")
    manifest.root = path.parent
    return manifest


def load_sequence(manifest: DatasetManifest, name: Optional[str] = None,
                  with_targets: bool = True) -> LdrSequence:
    """매니페스트 시퀀스를 LDR 프레임(및 프레임별 GT)과 함께 읽기"""
    entry = manifest.get(name)
    frames = [read_ldr_frame(manifest.resolve(f.path), f.exposure) for f in entry.frames]
    targets = None
    if with_targets and entry.frames and all(f.gt for f in entry.frames):
        targets = [read_hdr_frame(manifest.resolve(f.gt)) for f in entry.frames]
    return LdrSequence(frames=frames, schedule=entry.schedule, targets=targets, name=entry.name)


def load_pairs(manifest: DatasetManifest, strides=(1,)) -> List[LdrsHdrPair]:
    """
    매니페스트 전체에서 학습 쌍 생성

    pairs 항목이 있는 시퀀스는 정지 중심 프레임 쌍을, 프레임별 GT가 있는
    시퀀스는 모든 유효 중심에 대한 합성 쌍을 만든다.
    """
    pairs: List[LdrsHdrPair] = []
    for entry in manifest.sequences:
        sequence = load_sequence(manifest, entry.name, with_targets=not entry.pairs)
        if entry.pairs:
            for pair in entry.pairs:
                gt = read_hdr_frame(manifest.resolve(pair.gt))
                pairs.extend(build_dynamic_pairs(sequence, pair.center, gt, strides=(pair.stride,)))
        elif sequence.targets is not None:
            pairs.extend(build_synthetic_pairs(sequence, strides=strides))
        else:
            logger.warning(f"GT가 없어 학습 쌍을 만들 수 없습니다: {entry.name}")
    logger.info(f"매니페스트에서 학습 쌍 {len(pairs)}개 로드")
    return pairs
