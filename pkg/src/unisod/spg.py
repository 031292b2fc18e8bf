"""Switchable prompt generation.

A single block computes ``P = out(f_r * sigmoid(mask(f_a)) + f_a)``.  There
is no single-modal branch: for RGB-only input the auxiliary stream is fed the
same image, the frozen backbone returns identical features, and the same
computation becomes the single-modal refinement.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .errors import AccountingError, ContractViolation


class SPGBlock(nn.Module):
    def __init__(self, channels: int, level: int = 1):
        super().__init__()
        self.level = level
        self.mask_conv = nn.Conv2d(channels, channels, 3, padding=1)
        self.out_conv = nn.Conv2d(channels, channels, 3, padding=1)
        # prompt tuning starts from the pre-trained behaviour (P == 0)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    @staticmethod
    def closed_form_count(channels: int) -> int:
        return 2 * (9 * channels * channels + channels)

    def mask(self, f_a: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.mask_conv(f_a))

    def forward(self, f_r: torch.Tensor, f_a: torch.Tensor) -> torch.Tensor:
        if f_r.shape != f_a.shape:
            raise ContractViolation(f"SPG level {self.level}: f_r {tuple(f_r.shape)} vs f_a {tuple(f_a.shape)}")
        return self.out_conv(f_r * self.mask(f_a) + f_a)


class SPG(nn.Module):
    """One block per pyramid level, registered as ``level1`` .. ``level4``."""

    def __init__(self, channels):
        super().__init__()
        self.num_levels = len(channels)
        for i, c in enumerate(channels, start=1):
            self.add_module(f"level{i}", SPGBlock(c, i))

    def block(self, level: int) -> SPGBlock:
        return getattr(self, f"level{level}")

    def generate_all(self, pyr_r, pyr_a):
        if len(pyr_r) != self.num_levels or len(pyr_a) != self.num_levels:
            raise ContractViolation(
                f"expected {self.num_levels} levels, got {len(pyr_r)} rgb and {len(pyr_a)} aux"
            )
        return [self.block(i)(fr, fa) for i, (fr, fa) in enumerate(zip(pyr_r, pyr_a), start=1)]

    forward = generate_all


def generate_prompt(f_r: torch.Tensor, f_a: torch.Tensor, block: SPGBlock) -> torch.Tensor:
    return block(f_r, f_a)


def pool_prompt_tokens(prompt: torch.Tensor, k: int = 1) -> torch.Tensor:
    """Pool a ``B x C x h x w`` prompt into ``B x k x C`` tokens."""
    if k == 1:
        return prompt.mean(dim=(2, 3))[:, None, :]
    pooled = F.adaptive_avg_pool2d(prompt, (1, k))
    return pooled.flatten(2).transpose(1, 2)


def count_trainable_fraction(partition) -> float:
    trainable, frozen = partition.trainable_count, partition.frozen_count
    total = trainable + frozen
    if total == 0:
        raise AccountingError("partition holds no parameters")
    return trainable / total
