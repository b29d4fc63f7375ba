#!/usr/bin/env python3
"""
config/settings.py

📋 역할: 시스템 전역 설정
- .env 파일 / 환경변수에서 실행 환경 설정 로드
- 방사 측정(radiometry) 상수: 감마, μ-law 압축 계수, 노출 임계값
- 학습/평가 기본값: 시드, 디바이스, 패치 크기, PSNR 상한
"""

import os

# 환경변수 로드
from dotenv import load_dotenv
load_dotenv()


def _env_float(name: str, default: float) -> float:
    value = os.getenv(name)
    if value is None or value == "":
        return default
    try:
        return float(value)
    except ValueError:
        raise ValueError(f"환경변수 {name} 값이 숫자가 아닙니다: {value}")


def _env_int(name: str, default: int) -> int:
    return int(_env_float(name, default))


class Settings:
    """시스템 설정"""
    # 로그 레벨
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()

    # 실행 환경
    DEVICE = os.getenv("HDRV_DEVICE", "cpu")
    SEED = _env_int("HDRV_SEED", 0)
    OUTPUT_DIR = os.getenv("HDRV_OUTPUT_DIR", "outputs")

    # 방사 측정 상수
    GAMMA = _env_float("HDRV_GAMMA", 2.2)
    MU = _env_float("HDRV_MU", 5000.0)
    LOW_EXPOSURE_THRESHOLD = 0.15
    HIGH_EXPOSURE_THRESHOLD = 0.9
    DISPLAY_PERCENTILE = 99.0

    # CoarseNet 블렌딩 안정화 상수
    BLEND_EPS = 1e-8

    # 데이터 증강
    PATCH_SIZE = _env_int("HDRV_PATCH_SIZE", 256)
    NOISE_SIGMA = _env_float("HDRV_NOISE_SIGMA", 1e-3)
    TONE_PERTURB_RANGE = 0.7

    # 전역 정렬 (similarity RANSAC)
    RANSAC_THRESHOLD_PX = 2.0
    RANSAC_MAX_ITERS = 2000
    MAX_CORNERS = 500

    # 평가
    PSNR_CAP_DB = _env_float("HDRV_PSNR_CAP_DB", 99.0)

    # 지각 손실 특징 추출기: vgg16, random, none
    PERCEPTUAL_EXTRACTOR = os.getenv("HDRV_PERCEPTUAL", "vgg16").lower()

    # 데이터셋 매니페스트
    MANIFEST_SCHEMA_VERSION = 1

    # 노출 스케줄 프리셋 (EV 값)
    SCHEDULE_PRESETS = {
        "2exp": [-3.0, 3.0],
        "3exp": [-2.0, 0.0, 2.0],
    }

