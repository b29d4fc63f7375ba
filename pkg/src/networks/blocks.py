#!/usr/bin/env python3
"""
src/networks/blocks.py

📋 역할: CoarseNet / RefineNet 공용 빌딩 블록
- conv / lrelu 생성 헬퍼, 가중치 초기화
- 잔차 블록 (BN 없음)
- 다운샘플 배수 패딩 / 크롭
"""

from typing import Iterable, Tuple, Union

import torch
import torch.nn as nn
import torch.nn.functional as F
import torch.nn.init as init


def conv(in_channels: int, out_channels: int, kernel_size: int = 3, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_channels, out_channels, kernel_size, stride, kernel_size // 2, bias=True)


def lrelu() -> nn.LeakyReLU:
    return nn.LeakyReLU(negative_slope=0.1, inplace=False)


def initialize_weights(modules: Union[nn.Module, Iterable[nn.Module]], scale: float = 1.0) -> None:
    """Kaiming 초기화 후 scale 배 (잔차 블록은 0.1)"""
    if isinstance(modules, nn.Module):
        modules = [modules]
    for module in modules:
        for m in module.modules():
            if isinstance(m, nn.Conv2d):
                init.kaiming_normal_(m.weight, a=0, mode="fan_in")
                m.weight.data *= scale
                if m.bias is not None:
                    m.bias.data.zero_()


def zero_init(module: nn.Conv2d) -> nn.Conv2d:
    """예측 헤드를 0으로 초기화 (학습 시작 시 항등 정렬)"""
    nn.init.zeros_(module.weight)
    if module.bias is not None:
        nn.init.zeros_(module.bias)
    return module


class ResidualBlock(nn.Module):
    """
    ---Conv-LReLU-Conv-+-
     |_________________|
    """

    def __init__(self, nf: int = 64):
        super().__init__()
        self.conv1 = conv(nf, nf)
        self.conv2 = conv(nf, nf)
        self.act = lrelu()
        initialize_weights([self.conv1, self.conv2], 0.1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(self.act(self.conv1(x)))


def pad_to_multiple(x: torch.Tensor, multiple: int) -> Tuple[torch.Tensor, Tuple[int, int]]:
    """H, W 를 multiple 배수로 replicate 패딩. 원래 크기를 함께 반환"""
    height, width = x.shape[-2:]
    pad_h = (-height) % multiple
    pad_w = (-width) % multiple
    if pad_h or pad_w:
        x = F.pad(x, (0, pad_w, 0, pad_h), mode="replicate")
    return x, (height, width)


def crop(x: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    return x[..., :size[0], :size[1]]


def upsample2x(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
