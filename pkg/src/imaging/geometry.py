#!/usr/bin/env python3
"""
src/imaging/geometry.py

📋 역할: 공간 정렬 기본 연산
- SimilarityTransform: 스케일·회전·평행이동 전역 변환
- estimate_similarity: 노출 정합 후 코너 검출 + 패치 매칭 + RANSAC으로 전역 정렬 추정
- warp_similarity: 전역 변환 적용 (bilinear, 가장자리 클램프)
- backward_warp: 광류 기반 역방향 워핑 (bilinear, 미분 가능)
- random_global_motion: 정적 장면 평가용 무작위 전역 이동
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple, TypeVar

import cv2
import numpy as np
import torch
import torch.nn.functional as F

from config.settings import Settings
from src.imaging.frames import FlowField, LdrFrame, to_array, to_tensor
from src.imaging.radiometry import ldr_to_linear, linear_to_ldr

# 로깅 설정
logging.basicConfig(level=getattr(logging, Settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

FrameT = TypeVar("FrameT")


@dataclass
class SimilarityTransform:
    """p_dst = scale · R(rotation) · p_src + translation (픽셀 좌표, x 오른쪽 / y 아래)"""
    scale: float = 1.0
    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    degenerate: bool = False

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"스케일은 양수여야 합니다: scale={self.scale}")

    @classmethod
    def identity(cls, degenerate: bool = False) -> "SimilarityTransform":
        return cls(degenerate=degenerate)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "SimilarityTransform":
        a, b = float(matrix[0, 0]), float(matrix[1, 0])
        return cls(scale=math.hypot(a, b), rotation=math.atan2(b, a),
                   tx=float(matrix[0, 2]), ty=float(matrix[1, 2]))

    @classmethod
    def about_center(cls, scale: float, rotation: float, center: Tuple[float, float],
                     shift: Tuple[float, float] = (0.0, 0.0)) -> "SimilarityTransform":
        """center를 기준으로 회전/스케일 후 shift 만큼 이동"""
        cx, cy = center
        c, s = scale * math.cos(rotation), scale * math.sin(rotation)
        return cls(scale=scale, rotation=rotation,
                   tx=cx - (c * cx - s * cy) + shift[0],
                   ty=cy - (s * cx + c * cy) + shift[1])

    def matrix(self) -> np.ndarray:
        c = self.scale * math.cos(self.rotation)
        s = self.scale * math.sin(self.rotation)
        return np.array([[c, -s, self.tx], [s, c, self.ty]], dtype=np.float64)

    def inverse(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        c = inv_scale * math.cos(-self.rotation)
        s = inv_scale * math.sin(-self.rotation)
        return SimilarityTransform(
            scale=inv_scale, rotation=-self.rotation,
            tx=-(c * self.tx - s * self.ty), ty=-(s * self.tx + c * self.ty),
        )

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """self ∘ other (other 먼저 적용)"""
        m = np.vstack([self.matrix(), [0, 0, 1]]) @ np.vstack([other.matrix(), [0, 0, 1]])
        return SimilarityTransform.from_matrix(m[:2])

    def is_identity(self, tol: float = 1e-6) -> bool:
        return np.allclose(self.matrix(), SimilarityTransform().matrix(), atol=tol)


# ========================================
# 텐서 워핑
# ========================================

def _pixel_grid(height: int, width: int, dtype, device) -> torch.Tensor:
    ys, xs = torch.meshgrid(
        torch.arange(height, dtype=dtype, device=device),
        torch.arange(width, dtype=dtype, device=device),
        indexing="ij",
    )
    return torch.stack((xs, ys), dim=0)  # 2×H×W, (x, y)


def sample_bilinear(image: torch.Tensor, coords: torch.Tensor) -> torch.Tensor:
    """
    픽셀 좌표에서 bilinear 샘플링 (범위 밖은 가장자리로 클램프)

    Args:
        image: B×C×H×W
        coords: B×2×H×W 절대 픽셀 좌표 (x, y)
    """
    _, _, height, width = image.shape
    gx = 2.0 * coords[:, 0] / max(width - 1, 1) - 1.0
    gy = 2.0 * coords[:, 1] / max(height - 1, 1) - 1.0
    grid = torch.stack((gx, gy), dim=3)
    return F.grid_sample(image, grid, mode="bilinear", padding_mode="border", align_corners=True)


def backward_warp_tensor(image: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """
    output(p) = image(p + flow(p))

    Args:
        image: B×C×H×W
        flow: B×2×H×W (dx, dy) 픽셀 단위
    """
    if image.shape[0] != flow.shape[0] or image.shape[-2:] != flow.shape[-2:] or flow.shape[1] != 2:
        raise ValueError(
            f"영상과 광류 크기가 맞지 않습니다: image={tuple(image.shape)}, flow={tuple(flow.shape)}"
        )
    _, _, height, width = image.shape
    grid = _pixel_grid(height, width, flow.dtype, flow.device).unsqueeze(0)
    return sample_bilinear(image, grid + flow)


def warp_similarity_tensor(image: torch.Tensor, transform: SimilarityTransform) -> torch.Tensor:
    """output(p) = image(T⁻¹ p)"""
    _, _, height, width = image.shape
    inverse = torch.as_tensor(transform.inverse().matrix(), dtype=image.dtype, device=image.device)
    grid = _pixel_grid(height, width, image.dtype, image.device).reshape(2, -1)
    coords = inverse[:, :2] @ grid + inverse[:, 2:]
    coords = coords.reshape(1, 2, height, width).expand(image.shape[0], -1, -1, -1)
    return sample_bilinear(image, coords)


# ========================================
# 프레임 단위 연산
# ========================================

def backward_warp(frame: FrameT, flow: FlowField) -> FrameT:
    """광류로 프레임을 기준 프레임 좌표로 역방향 워핑"""
    if frame.pixels.shape[:2] != flow.displacements.shape[:2]:
        raise ValueError(
            f"프레임({frame.pixels.shape[:2]})과 광류({flow.displacements.shape[:2]}) 크기가 다릅니다."
        )
    image = to_tensor(frame.pixels, torch.float64)
    warped = backward_warp_tensor(image, to_tensor(flow.displacements, torch.float64))
    pixels = to_array(warped).astype(frame.pixels.dtype)
    if isinstance(frame, LdrFrame):
        pixels = np.clip(pixels, 0.0, 1.0)
    return replace(frame, pixels=pixels)


def warp_similarity(frame: FrameT, transform: SimilarityTransform) -> FrameT:
    """전역 similarity 변환으로 프레임 리샘플링"""
    if np.array_equal(transform.matrix(), SimilarityTransform().matrix()):
        return replace(frame, pixels=frame.pixels.copy())
    warped = warp_similarity_tensor(to_tensor(frame.pixels, torch.float64), transform)
    pixels = to_array(warped).astype(frame.pixels.dtype)
    if isinstance(frame, LdrFrame):
        pixels = np.clip(pixels, 0.0, 1.0)
    return replace(frame, pixels=pixels)


def _to_gray_u8(pixels: np.ndarray) -> np.ndarray:
    u8 = np.clip(np.round(pixels * 255.0), 0, 255).astype(np.uint8)
    if u8.shape[2] == 1:
        return u8[:, :, 0]
    return cv2.cvtColor(u8[:, :, :3], cv2.COLOR_RGB2GRAY)


def estimate_similarity(src: LdrFrame, dst: LdrFrame, seed: int = Settings.SEED,
                        max_iters: int = Settings.RANSAC_MAX_ITERS,
                        threshold: float = Settings.RANSAC_THRESHOLD_PX) -> SimilarityTransform:
    """
    src를 dst에 맞추는 similarity 변환 추정

    1. 두 프레임을 dst 노출로 재렌더링 (노출 정합)
    2. Shi-Tomasi 코너 검출, 피라미드 LK 패치 매칭 + 순방향/역방향 일관성 검사
    3. RANSAC (인라이어 임계 2px, 최소 100회 반복) 후 인라이어 재추정
    매칭 구조가 없으면 degenerate 플래그가 켜진 항등 변환을 반환한다.
    """
    if src.pixels.shape != dst.pixels.shape:
        raise ValueError(f"프레임 크기가 다릅니다: {src.pixels.shape} vs {dst.pixels.shape}")

    target_t = dst.exposure_t
    src_matched = linear_to_ldr(ldr_to_linear(src.pixels, src.exposure_t, src.gamma), target_t, dst.gamma)
    dst_matched = linear_to_ldr(ldr_to_linear(dst.pixels, dst.exposure_t, dst.gamma), target_t, dst.gamma)
    src_gray = _to_gray_u8(src_matched)
    dst_gray = _to_gray_u8(dst_matched)

    if src_gray.std() < 1e-6 or dst_gray.std() < 1e-6:
        logger.warning("전역 정렬 실패: 구조가 없는 (상수) 영상입니다. 항등 변환을 사용합니다.")
        return SimilarityTransform.identity(degenerate=True)

    corners = cv2.goodFeaturesToTrack(src_gray, maxCorners=Settings.MAX_CORNERS,
                                      qualityLevel=0.01, minDistance=5, blockSize=7)
    if corners is None or len(corners) < 3:
        logger.warning("전역 정렬 실패: 코너가 부족합니다. 항등 변환을 사용합니다.")
        return SimilarityTransform.identity(degenerate=True)

    lk_params = dict(winSize=(21, 21), maxLevel=3,
                     criteria=(cv2.TERM_CRITERIA_EPS | cv2.TERM_CRITERIA_COUNT, 50, 0.001))
    tracked, status, _ = cv2.calcOpticalFlowPyrLK(src_gray, dst_gray, corners, None, **lk_params)
    back, back_status, _ = cv2.calcOpticalFlowPyrLK(dst_gray, src_gray, tracked, None, **lk_params)
    consistent = np.linalg.norm((back - corners).reshape(-1, 2), axis=1) < 0.5
    keep = (status.ravel() == 1) & (back_status.ravel() == 1) & consistent
    src_pts = corners.reshape(-1, 2)[keep]
    dst_pts = tracked.reshape(-1, 2)[keep]
    if len(src_pts) < 3:
        logger.warning(f"전역 정렬 실패: 매칭 {len(src_pts)}개. 항등 변환을 사용합니다.")
        return SimilarityTransform.identity(degenerate=True)

    cv2.setRNGSeed(int(seed))
    matrix, inliers = cv2.estimateAffinePartial2D(
        src_pts, dst_pts, method=cv2.RANSAC, ransacReprojThreshold=threshold,
        maxIters=max(100, int(max_iters)), confidence=0.999, refineIters=10,
    )
    if matrix is None or inliers is None or int(inliers.sum()) < 3:
        logger.warning("전역 정렬 실패: RANSAC 합의가 없습니다. 항등 변환을 사용합니다.")
        return SimilarityTransform.identity(degenerate=True)

    transform = SimilarityTransform.from_matrix(matrix)
    logger.debug(
        f"전역 정렬: scale={transform.scale:.4f}, rot={math.degrees(transform.rotation):.3f}°, "
        f"t=({transform.tx:.2f}, {transform.ty:.2f}), inliers={int(inliers.sum())}/{len(src_pts)}"
    )
    return transform


def align_window(frames: Sequence[LdrFrame], reference_index: int, seed: int = Settings.SEED) -> List[LdrFrame]:
    """윈도우의 모든 프레임을 기준 프레임에 전역 정렬"""
    reference = frames[reference_index]
    aligned = []
    for index, frame in enumerate(frames):
        if index == reference_index:
            aligned.append(frame)
            continue
        transform = estimate_similarity(frame, reference, seed=seed)
        aligned.append(frame if transform.degenerate else warp_similarity(frame, transform))
    return aligned


def random_global_motion(frames: Sequence[FrameT], max_shift: float = 5.0,
                         seed: int = Settings.SEED) -> Tuple[List[FrameT], List[SimilarityTransform]]:
    """프레임마다 [0, max_shift] 픽셀 크기의 무작위 평행이동 적용"""
    rng = np.random.default_rng(seed)
    moved, transforms = [], []
    for frame in frames:
        magnitude = rng.uniform(0.0, max_shift)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        transform = SimilarityTransform(tx=magnitude * math.cos(angle), ty=magnitude * math.sin(angle))
        moved.append(warp_similarity(frame, transform))
        transforms.append(transform)
    return moved, transforms
