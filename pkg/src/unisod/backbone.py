"""Hierarchical feature encoders producing stride-4/8/16/32 pyramids."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import torch
from torch import nn

from .errors import ContractViolation

STRIDES = (4, 8, 16, 32)

FeaturePyramid = list  # list of 4 tensors, B x C_i x H/s_i x W/s_i


@dataclass(frozen=True)
class BackboneConfig:
    channels: tuple[int, int, int, int] = (16, 32, 64, 128)
    variant: str = "toy_conv"
    bias: bool = True

    def __post_init__(self):
        if len(self.channels) != 4 or any(int(c) < 1 for c in self.channels):
            raise ContractViolation(f"backbone channels must be 4 positive ints, got {self.channels}")
        if self.variant not in ("toy_conv", "external"):
            raise ContractViolation(f"unknown backbone variant {self.variant!r}")


def check_input(image: torch.Tensor) -> torch.Tensor:
    if image.ndim == 3:
        image = image[None]
    if image.ndim != 4 or image.shape[1] != 3:
        raise ContractViolation(f"expected a 3-channel image, got shape {tuple(image.shape)}")
    h, w = image.shape[-2:]
    if h % 32 or w % 32:
        ph, pw = (-h) % 32, (-w) % 32
        raise ContractViolation(
            f"input {h}x{w} is not divisible by 32; pad by ({ph}, {pw}) to {h + ph}x{w + pw}"
        )
    return image


def check_pyramid(levels: Sequence[torch.Tensor], image: torch.Tensor, channels: Sequence[int] | None = None) -> None:
    if len(levels) != 4:
        raise ContractViolation(f"pyramid must have 4 levels, got {len(levels)}")
    h, w = image.shape[-2:]
    for i, (f, s) in enumerate(zip(levels, STRIDES)):
        if tuple(f.shape[-2:]) != (h // s, w // s):
            raise ContractViolation(f"level {i + 1} has size {tuple(f.shape[-2:])}, expected {(h // s, w // s)}")
        if channels is not None and f.shape[1] != channels[i]:
            raise ContractViolation(f"level {i + 1} has {f.shape[1]} channels, expected {channels[i]}")


class ResidualBlock(nn.Module):
    def __init__(self, ch: int, bias: bool = True):
        super().__init__()
        self.conv1 = nn.Conv2d(ch, ch, 3, padding=1, bias=bias)
        self.conv2 = nn.Conv2d(ch, ch, 3, padding=1, bias=bias)
        self.act = nn.ReLU()

    def forward(self, x):
        return self.act(x + self.conv2(self.act(self.conv1(x))))


class ToyConvEncoder(nn.Module):
    """Four stride-2 stages (two for the first) each followed by a residual block."""

    def __init__(self, channels=(16, 32, 64, 128), bias: bool = True):
        super().__init__()
        c1, c2, c3, c4 = channels
        stem = max(c1 // 2, 1)
        self.stages = nn.ModuleList(
            [
                nn.Sequential(
                    nn.Conv2d(3, stem, 3, stride=2, padding=1, bias=bias),
                    nn.ReLU(),
                    nn.Conv2d(stem, c1, 3, stride=2, padding=1, bias=bias),
                    nn.ReLU(),
                    ResidualBlock(c1, bias),
                ),
                *[
                    nn.Sequential(
                        nn.Conv2d(cin, cout, 3, stride=2, padding=1, bias=bias),
                        nn.ReLU(),
                        ResidualBlock(cout, bias),
                    )
                    for cin, cout in ((c1, c2), (c2, c3), (c3, c4))
                ],
            ]
        )

    def forward(self, x: torch.Tensor) -> FeaturePyramid:
        levels = []
        for stage in self.stages:
            x = stage(x)
            levels.append(x)
        return levels


class Backbone(nn.Module):
    """Shared encoder for the RGB and auxiliary streams.

    ``encoder`` may be any module mapping ``B x 3 x H x W`` to a list of four
    feature maps at strides 4/8/16/32; the toy encoder is built when omitted.
    """

    def __init__(self, config: BackboneConfig = BackboneConfig(), encoder: nn.Module | Callable | None = None):
        super().__init__()
        self.config = config
        if encoder is None:
            if config.variant == "external":
                raise ContractViolation("external backbone variant needs an encoder module")
            encoder = ToyConvEncoder(config.channels, bias=config.bias)
        self.encoder = encoder

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(self.config.channels)

    def extract(self, image: torch.Tensor) -> FeaturePyramid:
        image = check_input(image)
        levels = list(self.encoder(image))
        check_pyramid(levels, image, self.channels)
        return levels

    forward = extract

    def shared_extract(self, rgb: torch.Tensor, aux: torch.Tensor) -> tuple[FeaturePyramid, FeaturePyramid]:
        """Both streams through the same parameters.

        When ``aux`` is literally the ``rgb`` tensor the pyramid is computed
        once and returned for both streams.
        """
        if rgb.shape != aux.shape:
            raise ContractViolation(f"rgb {tuple(rgb.shape)} and aux {tuple(aux.shape)} differ in shape")
        pyr_r = self.extract(rgb)
        if aux is rgb:
            return pyr_r, list(pyr_r)
        return pyr_r, self.extract(aux)
