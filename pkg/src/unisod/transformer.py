"""Per-level token-space transformer encoders.

Levels 2-4 of the pyramid are flattened to token sequences, run through an
L-layer pre-norm encoder and reshaped back.  Level 1 is never encoded.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .backbone import STRIDES
from .errors import ContractViolation

ENCODED_LEVELS = (2, 3, 4)


def num_heads(dim: int) -> int:
    """dim // 32 heads (at least one), lowered until it divides ``dim``."""
    heads = max(dim // 32, 1)
    while dim % heads:
        heads -= 1
    return heads


def flatten(f: torch.Tensor) -> torch.Tensor:
    return f.flatten(2).transpose(1, 2)


def reshape(tokens: torch.Tensor, hw: tuple[int, int]) -> torch.Tensor:
    b, n, d = tokens.shape
    h, w = hw
    if n != h * w:
        raise ContractViolation(f"{n} tokens cannot be reshaped to {h}x{w}")
    return tokens.transpose(1, 2).reshape(b, d, h, w)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        b, n, d = x.shape
        q, k, v = self.qkv(x).reshape(b, n, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        attn = (q @ k.transpose(-2, -1)) / math.sqrt(d // self.heads)
        out = attn.softmax(dim=-1) @ v
        return self.proj(out.transpose(1, 2).reshape(b, n, d))


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, mlp_ratio * dim), nn.GELU(), nn.Linear(mlp_ratio * dim, dim))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class LevelEncoder(nn.Module):
    """TE_i: learned positional embedding followed by ``layers`` encoder layers.

    The positional embedding is stored on the grid of the configured input
    size and bilinearly resized for other resolutions.
    """

    def __init__(self, dim: int, layers: int, grid: tuple[int, int], mlp_ratio: int = 4):
        super().__init__()
        self.dim = dim
        self.pos_embed = nn.Parameter(torch.zeros(1, dim, *grid))
        self.layers = nn.ModuleList(EncoderLayer(dim, num_heads(dim), mlp_ratio) for _ in range(layers))

    def positional(self, hw: tuple[int, int]) -> torch.Tensor:
        pos = self.pos_embed
        if tuple(pos.shape[-2:]) != tuple(hw):
            pos = F.interpolate(pos, size=hw, mode="bilinear", align_corners=False)
        return flatten(pos)

    def forward(self, f: torch.Tensor, extra_tokens: torch.Tensor | None = None) -> torch.Tensor:
        if f.shape[1] != self.dim:
            raise ContractViolation(f"expected {self.dim} channels, got {f.shape[1]}")
        hw = tuple(f.shape[-2:])
        tokens = flatten(f) + self.positional(hw)
        n = tokens.shape[1]
        if extra_tokens is not None:
            tokens = torch.cat([tokens, extra_tokens], dim=1)
        for layer in self.layers:
            tokens = layer(tokens)
        return reshape(tokens[:, :n], hw)


class TransformerCore(nn.Module):
    def __init__(self, channels, layers: int = 4, image_size: int = 384, mlp_ratio: int = 4):
        super().__init__()
        if layers < 0:
            raise ContractViolation("transformer layers must be >= 0")
        self.layers = layers
        for i in ENCODED_LEVELS:
            grid = (image_size // STRIDES[i - 1],) * 2
            self.add_module(f"TE{i}", LevelEncoder(channels[i - 1], layers, grid, mlp_ratio))

    def encode_level(self, f: torch.Tensor, level: int, extra_tokens: torch.Tensor | None = None) -> torch.Tensor:
        if level not in ENCODED_LEVELS:
            raise ContractViolation(f"level {level} is not transformer-encoded (only levels 2-4 are)")
        return getattr(self, f"TE{level}")(f, extra_tokens)

    def encode_pyramid(self, pyramid, prompts=None, mode: str = "sum"):
        """Return ``[f1, f~2, f~3, f~4]``.

        ``sum``: each prompt is added to its level before encoding (and to
        level 1, which skips the encoder).  ``concat``: prompts for levels
        2-4 are appended as extra tokens of shape ``B x k x C_i`` and dropped
        from the output; level 1 still receives its prompt by addition.
        """
        if prompts is not None and len(prompts) != len(pyramid):
            raise ContractViolation(f"{len(prompts)} prompts for {len(pyramid)} levels")
        out = []
        for level, f in enumerate(pyramid, start=1):
            p = None if prompts is None else prompts[level - 1]
            if mode == "concat" and level in ENCODED_LEVELS:
                if p is not None and (p.ndim != 3 or p.shape[0] != f.shape[0] or p.shape[2] != f.shape[1]):
                    raise ContractViolation(f"level {level}: concat prompt shape {tuple(p.shape)} incompatible with {tuple(f.shape)}")
                out.append(self.encode_level(f, level, extra_tokens=p))
                continue
            if mode not in ("sum", "concat"):
                raise ContractViolation(f"unknown prompt mode {mode!r}")
            if p is not None:
                if p.shape != f.shape:
                    raise ContractViolation(f"level {level}: prompt {tuple(p.shape)} vs feature {tuple(f.shape)}")
                f = f + p
            out.append(f if level == 1 else self.encode_level(f, level))
        return out
