"""Procedural datasets for smoke tests and desk-scale experiments.

``rgb_set`` draws one brightly coloured object on a textured background, so
saliency is visible in RGB alone.  ``fusion_set`` dims and corrupts the RGB
view and adds an auxiliary map (near = dark, like an inverted depth map) in
which the object shares its depth with decoys.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .data import Modality, Sample


def _smooth_noise(rng: np.random.Generator, size: int, cells: int = 4) -> np.ndarray:
    coarse = rng.random((cells, cells))
    img = Image.fromarray((coarse * 255).astype(np.uint8)).resize((size, size), Image.BICUBIC)
    return np.asarray(img, dtype=np.float64) / 255.0


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    base = rng.uniform(0.25, 0.45, size=3)
    planes = [np.clip(base[c] + 0.25 * (_smooth_noise(rng, size, 6) - 0.5), 0, 1) for c in range(3)]
    img = np.stack(planes, axis=-1)
    img += rng.normal(0.0, 0.02, img.shape)
    return np.clip(img, 0.0, 1.0)


def _ellipse(size: int, cy: float, cx: float, ry: float, rx: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    return ((yy + 0.5 - cy) / ry) ** 2 + ((xx + 0.5 - cx) / rx) ** 2 <= 1.0


def _place(rng: np.random.Generator, size: int, taken: np.ndarray, tries: int = 50) -> np.ndarray:
    for _ in range(tries):
        ry, rx = rng.uniform(0.12, 0.22, size=2) * size
        cy = rng.uniform(ry, size - ry)
        cx = rng.uniform(rx, size - rx)
        mask = _ellipse(size, cy, cx, ry, rx)
        grown = _ellipse(size, cy, cx, ry + 2, rx + 2)
        if not (grown & taken).any():
            return mask
    return mask


def _paint(rng: np.random.Generator, img: np.ndarray, mask: np.ndarray, color: np.ndarray) -> None:
    shade = color + rng.normal(0.0, 0.03, (mask.sum(), 3))
    img[mask] = np.clip(shade, 0.0, 1.0)


def _to_sample(idx: int, rgb: np.ndarray, gt: np.ndarray, aux: np.ndarray | None, modality: Modality) -> Sample:
    rgb_t = torch.from_numpy(rgb.astype(np.float32)).permute(2, 0, 1).contiguous()
    gt_t = torch.from_numpy(gt.astype(np.float32))[None]
    aux_t = None
    if aux is not None:
        aux_t = torch.from_numpy(aux.astype(np.float32))[None].expand(3, -1, -1).contiguous()
    return Sample(id=f"{idx:04d}", rgb=rgb_t, gt=gt_t, modality=modality, aux=aux_t)


def _object_color(rng: np.random.Generator) -> np.ndarray:
    color = rng.uniform(0.0, 0.3, size=3)
    color[rng.integers(3)] = rng.uniform(0.85, 1.0)
    return color


def rgb_set(n: int, size: int = 64, seed: int = 0) -> list[Sample]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        img = _background(rng, size)
        mask = _place(rng, size, np.zeros((size, size), bool))
        _paint(rng, img, mask, _object_color(rng))
        out.append(_to_sample(i, img, mask, None, Modality.RGB))
    return out


def fusion_set(
    n: int,
    size: int = 64,
    seed: int = 0,
    modality: Modality | str = Modality.RGBD,
    gain: float = 0.7,
    noise: float = 0.1,
    decoys: int = 1,
) -> list[Sample]:
    """RGB view dimmed and noisy; auxiliary view marks the object and ``decoys`` look-alikes.

    Neither view alone pins down the mask: the RGB object is degraded, and
    the auxiliary map has one dark blob per decoy besides the object.
    """
    modality = Modality.parse(modality)
    rng = np.random.default_rng(seed + 10_000)
    out = []
    for i in range(n):
        img = _background(rng, size)
        taken = np.zeros((size, size), bool)
        gt = _place(rng, size, taken)
        taken |= gt
        _paint(rng, img, gt, _object_color(rng))
        img = np.clip(img * gain + rng.normal(0.0, noise, img.shape), 0.0, 1.0)
        aux = 0.75 + 0.15 * (_smooth_noise(rng, size, 3) - 0.5)
        aux[gt] = rng.uniform(0.1, 0.2)
        for _ in range(decoys):
            m = _place(rng, size, taken)
            taken |= m
            aux[m] = rng.uniform(0.1, 0.2)
        aux = np.clip(aux + rng.normal(0.0, 0.01, aux.shape), 0.0, 1.0)
        out.append(_to_sample(i, img, gt, aux, modality))
    return out


def write_dataset(root: str | Path, samples: list[Sample], rgb_dir: str = "RGB", gt_dir: str = "GT", aux_dir: str = "Aux") -> Path:
    """Write samples in the on-disk layout read by :func:`unisod.data.scan_dataset`."""
    root = Path(root)
    for d in (rgb_dir, gt_dir) + ((aux_dir,) if any(s.aux is not None for s in samples) else ()):
        (root / d).mkdir(parents=True, exist_ok=True)
    for s in samples:
        rgb = (s.rgb.permute(1, 2, 0).numpy() * 255).round().astype(np.uint8)
        Image.fromarray(rgb).save(root / rgb_dir / f"{s.id}.png")
        Image.fromarray((s.gt[0].numpy() * 255).astype(np.uint8)).save(root / gt_dir / f"{s.id}.png")
        if s.aux is not None:
            depth = (s.aux[0].numpy() * 65535).round().astype(np.uint16)
            Image.fromarray(depth).save(root / aux_dir / f"{s.id}.png")
    return root
