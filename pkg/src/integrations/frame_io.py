#!/usr/bin/env python3
"""
src/integrations/frame_io.py

📋 역할: 프레임 파일 입출력
- LDR: 8/16비트 PNG (정수값을 [0,1]로 선형 매핑)
- HDR: OpenEXR (float16/float32), Radiance RGBE (.hdr)
- 미리보기: Reinhard 톤매핑 후 8비트 PNG (Pillow)
- 디코딩 실패 시 경로가 포함된 IOError
"""

import logging
from pathlib import Path
from typing import Optional, Union

import cv2
import numpy as np
from PIL import Image

from config.settings import Settings
from src.imaging.frames import LdrFrame, RadianceFrame
from src.imaging.radiometry import display_tonemap

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

LDR_EXTENSIONS = (".png",)
HDR_EXTENSIONS = (".exr", ".hdr")

PathLike = Union[str, Path]


def _ensure_parent(path: Path) -> None:
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)


def _read_raw(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"파일이 없습니다: {path}")
    try:
        image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    except Exception as e:
        logger.error(f"영상 디코딩 실패: {path}: {str(e)}")
        raise IOError(f"영상 디코딩 실패: {path}: {str(e)}")
    if image is None:
        raise IOError(f"영상 디코딩 실패: {path}")
    if image.ndim == 2:
        image = image[:, :, None]
    elif image.shape[2] >= 3:
        image = cv2.cvtColor(image[:, :, :3], cv2.COLOR_BGR2RGB)
    return image


def _write_raw(path: Path, image: np.ndarray, params: Optional[list] = None) -> None:
    _ensure_parent(path)
    if image.shape[2] == 3:
        image = cv2.cvtColor(image, cv2.COLOR_RGB2BGR)
    try:
        ok = cv2.imwrite(str(path), image, params or [])
    except Exception as e:
        logger.error(f"영상 저장 실패: {path}: {str(e)}")
        raise IOError(f"영상 저장 실패: {path}: {str(e)}")
    if not ok:
        raise IOError(f"영상 저장 실패: {path}")


def read_ldr_frame(path: PathLike, exposure_t: float, gamma: float = Settings.GAMMA) -> LdrFrame:
    """PNG를 LdrFrame으로 읽기 (8비트 255 → 1.0, 16비트 65535 → 1.0)"""
    path = Path(path)
    raw = _read_raw(path)
    if raw.dtype == np.uint8:
        pixels = raw.astype(np.float32) / 255.0
    elif raw.dtype == np.uint16:
        pixels = raw.astype(np.float32) / 65535.0
    else:
        raise IOError(f"지원하지 않는 LDR 비트 깊이입니다: {path} ({raw.dtype})")
    return LdrFrame(pixels, exposure_t=exposure_t, gamma=gamma)


def write_ldr_frame(path: PathLike, frame: LdrFrame, bit_depth: int = 16) -> None:
    if bit_depth not in (8, 16):
        raise ValueError(f"PNG 비트 깊이는 8 또는 16 이어야 합니다: {bit_depth}")
    peak, dtype = (255.0, np.uint8) if bit_depth == 8 else (65535.0, np.uint16)
    quantized = np.round(np.clip(frame.pixels, 0.0, 1.0) * peak).astype(dtype)
    _write_raw(Path(path), quantized)


def read_hdr_frame(path: PathLike) -> RadianceFrame:
    """EXR / RGBE 파일을 RadianceFrame으로 읽기"""
    path = Path(path)
    raw = _read_raw(path)
    if not np.issubdtype(raw.dtype, np.floating):
        raise IOError(f"HDR 파일이 부동소수점 형식이 아닙니다: {path} ({raw.dtype})")
    try:
        return RadianceFrame(np.clip(raw.astype(np.float32), 0.0, None))
    except ValueError as e:
        raise IOError(f"HDR 파일 내용이 올바르지 않습니다: {path}: {str(e)}")


def write_hdr_frame(path: PathLike, frame: RadianceFrame, half: bool = False) -> None:
    path = Path(path)
    pixels = frame.pixels.astype(np.float32)
    params = []
    if path.suffix.lower() == ".exr":
        exr_type = cv2.IMWRITE_EXR_TYPE_HALF if half else cv2.IMWRITE_EXR_TYPE_FLOAT
        params = [cv2.IMWRITE_EXR_TYPE, exr_type]
    _write_raw(path, pixels, params)


def read_frame(path: PathLike, exposure_t: Optional[float] = None,
               gamma: float = Settings.GAMMA) -> Union[LdrFrame, RadianceFrame]:
    """확장자로 LDR/HDR 판별 후 읽기"""
    suffix = Path(path).suffix.lower()
    if suffix in HDR_EXTENSIONS:
        return read_hdr_frame(path)
    if suffix in LDR_EXTENSIONS:
        if exposure_t is None:
            raise ValueError(f"LDR 프레임에는 노출 시간이 필요합니다: {path}")
        return read_ldr_frame(path, exposure_t, gamma)
    raise IOError(f"지원하지 않는 파일 형식입니다: {path}")


def write_frame(path: PathLike, frame: Union[LdrFrame, RadianceFrame]) -> None:
    suffix = Path(path).suffix.lower()
    if isinstance(frame, RadianceFrame):
        if suffix not in HDR_EXTENSIONS:
            raise ValueError(f"HDR 프레임은 {HDR_EXTENSIONS} 로만 저장할 수 있습니다: {path}")
        write_hdr_frame(path, frame)
    elif isinstance(frame, LdrFrame):
        if suffix not in LDR_EXTENSIONS:
            raise ValueError(f"LDR 프레임은 PNG 로만 저장할 수 있습니다: {path}")
        write_ldr_frame(path, frame)
    else:
        raise ValueError(f"알 수 없는 프레임 타입입니다: {type(frame).__name__}")


def write_preview(path: PathLike, frame: RadianceFrame, gamma: float = Settings.GAMMA) -> None:
    """Reinhard 톤매핑 + 감마 인코딩 8비트 미리보기 PNG"""
    path = Path(path)
    _ensure_parent(path)
    display = display_tonemap(frame).pixels ** (1.0 / gamma)
    image = Image.fromarray(np.round(np.clip(display, 0.0, 1.0) * 255.0).astype(np.uint8))
    image.save(path, format="PNG")


def list_frames(directory: PathLike, extensions=LDR_EXTENSIONS + HDR_EXTENSIONS):
    """디렉터리의 프레임 파일을 이름순으로"""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"디렉터리가 없습니다: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in extensions)
