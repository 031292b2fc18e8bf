"""Training objective: BCE + edge-aware smoothness + dice, unit weighted by default.

All functions take ``B x 1 x H x W`` (or ``H x W``) saliency maps and average
over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ContractViolation

BCE_EPS = 1e-7
DICE_EPS = 1.0
SMOOTH_ALPHA = 10.0


@dataclass
class LossReport:
    bce: torch.Tensor
    smooth: torch.Tensor
    dice: torch.Tensor
    total: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {k: float(getattr(self, k).detach()) for k in ("bce", "smooth", "dice", "total")}


def _as_4d(x: torch.Tensor) -> torch.Tensor:
    if x.ndim == 2:
        return x[None, None]
    if x.ndim == 3:
        return x[None]
    return x


def _check(s: torch.Tensor, g: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    if s.shape != g.shape:
        raise ContractViolation(f"prediction {tuple(s.shape)} and target {tuple(g.shape)} differ in shape")
    return _as_4d(s), _as_4d(g).to(s.dtype)


def bce_loss(s: torch.Tensor, g: torch.Tensor, eps: float = BCE_EPS) -> torch.Tensor:
    s, g = _check(s, g)
    s = s.clamp(eps, 1.0 - eps)
    return -(g * torch.log(s) + (1.0 - g) * torch.log1p(-s)).mean()


def smoothness_loss(s: torch.Tensor, image: torch.Tensor, alpha: float = SMOOTH_ALPHA) -> torch.Tensor:
    """Edge-aware first-order smoothness.

    Forward differences of ``s`` weighted by ``exp(-alpha * |dI|)`` (image
    gradient averaged over channels), summed and divided by the pixel count.
    """
    s = _as_4d(s)
    image = _as_4d(image).to(s.dtype)
    if s.shape[0] != image.shape[0] or s.shape[-2:] != image.shape[-2:]:
        raise ContractViolation(f"saliency {tuple(s.shape)} and image {tuple(image.shape)} are not aligned")
    dsx = (s[..., :, 1:] - s[..., :, :-1]).abs()
    dsy = (s[..., 1:, :] - s[..., :-1, :]).abs()
    dix = (image[..., :, 1:] - image[..., :, :-1]).abs().mean(1, keepdim=True)
    diy = (image[..., 1:, :] - image[..., :-1, :]).abs().mean(1, keepdim=True)
    per_image = (dsx * torch.exp(-alpha * dix)).sum(dim=(1, 2, 3)) + (dsy * torch.exp(-alpha * diy)).sum(dim=(1, 2, 3))
    h, w = s.shape[-2:]
    return (per_image / (h * w)).mean()


def dice_loss(s: torch.Tensor, g: torch.Tensor, eps: float = DICE_EPS) -> torch.Tensor:
    s, g = _check(s, g)
    inter = (s * g).sum(dim=(1, 2, 3))
    denom = s.sum(dim=(1, 2, 3)) + g.sum(dim=(1, 2, 3))
    return (1.0 - (2.0 * inter + eps) / (denom + eps)).mean()


def total_loss(
    s: torch.Tensor,
    g: torch.Tensor,
    image: torch.Tensor,
    alpha: float = SMOOTH_ALPHA,
    w_bce: float = 1.0,
    w_smooth: float = 1.0,
    w_dice: float = 1.0,
) -> LossReport:
    bce = bce_loss(s, g)
    smooth = smoothness_loss(s, image, alpha)
    dice = dice_loss(s, g)
    return LossReport(bce, smooth, dice, w_bce * bce + w_smooth * smooth + w_dice * dice)


def loss_kwargs(cfg) -> dict[str, float]:
    return {
        "alpha": float(cfg["loss.alpha_smooth"]),
        "w_bce": float(cfg["loss.w_bce"]),
        "w_smooth": float(cfg["loss.w_smooth"]),
        "w_dice": float(cfg["loss.w_dice"]),
    }
