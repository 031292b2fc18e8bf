"""Top-down decoder turning encoded pyramid levels into a saliency map."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ContractViolation


def upsample(x: torch.Tensor, factor: int) -> torch.Tensor:
    if factor not in (2, 4):
        raise ContractViolation(f"upsample factor must be 2 or 4, got {factor}")
    return F.interpolate(x, scale_factor=factor, mode="bilinear", align_corners=False)


def conv3x3(cin: int, cout: int, bias: bool = True, relu: bool = True) -> nn.Module:
    conv = nn.Conv2d(cin, cout, 3, padding=1, bias=bias)
    return nn.Sequential(conv, nn.ReLU()) if relu else conv


def _add(a: torch.Tensor, b: torch.Tensor, where: str) -> torch.Tensor:
    if a.shape != b.shape:
        raise ContractViolation(f"{where}: cannot add {tuple(a.shape)} and {tuple(b.shape)} (stride mismatch)")
    return a + b


class Decoder(nn.Module):
    """Each level is first projected to ``width`` channels so the additions type-check."""

    def __init__(self, channels, width: int = 64, bias: bool = True):
        super().__init__()
        self.width = width
        self.proj = nn.ModuleList(conv3x3(c, width, bias) for c in channels)
        self.up = nn.ModuleDict({f"s{i}": conv3x3(width, width, bias) for i in (2, 3, 4)})
        self.fuse = conv3x3(width, width, bias)
        self.head = conv3x3(width, 1, bias, relu=False)

    def forward(self, levels, return_intermediates: bool = False):
        f1, f2, f3, f4 = levels
        p1, p2, p3, p4 = (proj(f) for proj, f in zip(self.proj, levels))
        s4 = self.up["s4"](upsample(p4, 2))
        s3 = self.up["s3"](upsample(_add(p3, s4, "level 3"), 2))
        s2 = self.up["s2"](upsample(_add(p2, s3, "level 2"), 2))
        logits = self.head(upsample(self.fuse(_add(s2, p1, "level 1")), 4))
        saliency = torch.sigmoid(logits)
        if return_intermediates:
            return saliency, {"s4": s4, "s3": s3, "s2": s2, "logits": logits}
        return saliency

    decode = forward
