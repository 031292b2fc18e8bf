"""Image / mask / auxiliary-modality loading.

Layout on disk is ``root/RGB/<stem>.jpg``, ``root/GT/<stem>.png`` and, for
RGB-D and RGB-T sets, ``root/Aux/<stem>.png``.  Everything downstream sees a
:class:`Sample` with planes already resized to the model input size.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, ContractViolation, DataError

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff")
MASK_THRESHOLD = 127


class Modality(str, enum.Enum):
    RGB = "RGB"
    RGBD = "RGBD"
    RGBT = "RGBT"

    @classmethod
    def parse(cls, value: "str | Modality") -> "Modality":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper().replace("-", ""))
        except ValueError:
            raise ConfigError(f"unknown modality {value!r}; expected RGB, RGBD or RGBT") from None

    @property
    def has_aux(self) -> bool:
        return self is not Modality.RGB


TASK_MODALITY = {"rgb": Modality.RGB, "rgbd": Modality.RGBD, "rgbt": Modality.RGBT}


@dataclass(frozen=True)
class DatasetSpec:
    root: Path
    modality: Modality = Modality.RGB
    rgb_dir: str = "RGB"
    gt_dir: str = "GT"
    aux_dir: str = "Aux"
    target_size: tuple[int, int] = (384, 384)

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))
        object.__setattr__(self, "modality", Modality.parse(self.modality))

    @classmethod
    def from_config(cls, cfg) -> "DatasetSpec":
        size = int(cfg["model.image_size"])
        return cls(
            root=Path(cfg["data.root"]),
            modality=cfg["data.modality"],
            rgb_dir=cfg["data.rgb_dir"],
            gt_dir=cfg["data.gt_dir"],
            aux_dir=cfg["data.aux_dir"],
            target_size=(size, size),
        )


@dataclass(frozen=True)
class SampleDescriptor:
    id: str
    rgb_path: Path
    gt_path: Path | None
    aux_path: Path | None = None


@dataclass
class ScanResult:
    descriptors: list[SampleDescriptor]
    rejects: list[tuple[str, str]] = field(default_factory=list)  # (stem, reason)

    def __len__(self):
        return len(self.descriptors)


def _stems(directory: Path) -> dict[str, Path]:
    out: dict[str, Path] = {}
    for p in sorted(directory.iterdir()):
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES:
            out.setdefault(p.stem, p)
    return out


def scan_dataset(spec: DatasetSpec, require_gt: bool = True) -> ScanResult:
    """Match file stems across the modality directories.

    Stems missing from any required directory are returned in ``rejects``
    together with the directories they are missing from.
    """
    root = spec.root
    if not root.is_dir():
        raise ConfigError(f"dataset root does not exist: {root}")
    dirs = {"rgb": root / spec.rgb_dir}
    if require_gt:
        dirs["gt"] = root / spec.gt_dir
    if spec.modality.has_aux:
        dirs["aux"] = root / spec.aux_dir
    for name, d in dirs.items():
        if not d.is_dir():
            raise ConfigError(f"missing {name} directory: {d}")

    listing = {name: _stems(d) for name, d in dirs.items()}
    all_stems = sorted(set().union(*listing.values()))
    descriptors, rejects = [], []
    for stem in all_stems:
        missing = [name for name, files in listing.items() if stem not in files]
        if missing:
            rejects.append((stem, "missing in " + ",".join(missing)))
            continue
        descriptors.append(
            SampleDescriptor(
                id=stem,
                rgb_path=listing["rgb"][stem],
                gt_path=listing["gt"][stem] if require_gt else None,
                aux_path=listing["aux"][stem] if "aux" in listing else None,
            )
        )
    return ScanResult(descriptors, rejects)


@dataclass(frozen=True)
class Sample:
    """One preprocessed item.  Tensors are CHW float32."""

    id: str
    rgb: torch.Tensor
    gt: torch.Tensor
    modality: Modality = Modality.RGB
    aux: torch.Tensor | None = None

    def __post_init__(self):
        modality = Modality.parse(self.modality)
        object.__setattr__(self, "modality", modality)
        if self.rgb.ndim != 3 or self.rgb.shape[0] != 3:
            raise ContractViolation(f"{self.id}: rgb must be 3xHxW, got {tuple(self.rgb.shape)}")
        hw = self.rgb.shape[-2:]
        if self.gt.shape != (1, *hw):
            raise ContractViolation(f"{self.id}: gt shape {tuple(self.gt.shape)} does not match rgb {tuple(hw)}")
        if modality.has_aux != (self.aux is not None):
            raise ContractViolation(f"{self.id}: modality {modality.value} requires aux={'present' if modality.has_aux else 'absent'}")
        if self.aux is not None and self.aux.shape != self.rgb.shape:
            raise ContractViolation(f"{self.id}: aux shape {tuple(self.aux.shape)} != rgb {tuple(self.rgb.shape)}")

    @property
    def size(self) -> tuple[int, int]:
        return tuple(self.rgb.shape[-2:])


def _open(path: Path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
    except (OSError, UnidentifiedImageError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return img


def read_rgb(path: Path) -> torch.Tensor:
    arr = np.asarray(_open(path).convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def read_mask(path: Path) -> torch.Tensor:
    """Binary 1xHxW mask; pixels strictly above 127 are foreground."""
    arr = np.asarray(_open(path).convert("L"))
    return torch.from_numpy((arr > MASK_THRESHOLD).astype(np.float32))[None]


def read_aux(path: Path) -> torch.Tensor:
    """Depth/thermal image as 3xHxW in [0, 1].

    Three-channel images are scaled like RGB.  Single-channel 8- or 16-bit
    maps are min-max normalized per image and replicated to three channels.
    """
    img = _open(path)
    if img.mode in ("RGB", "RGBA", "P", "CMYK", "YCbCr"):
        return read_rgb(path)
    arr = np.asarray(img).astype(np.float64)
    if arr.ndim == 3:
        arr = arr[..., 0]
    lo, hi = arr.min(), arr.max()
    arr = (arr - lo) / (hi - lo) if hi > lo else np.zeros_like(arr)
    plane = torch.from_numpy(arr.astype(np.float32))
    return plane[None].expand(3, -1, -1).contiguous()


def resize_image(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    out = F.interpolate(x[None], size=size, mode="bilinear", align_corners=False)[0]
    return out.clamp_(0.0, 1.0)


def resize_mask(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x[None], size=size, mode="nearest")[0]


def load_sample(desc: SampleDescriptor, target_size: tuple[int, int], modality: Modality | str | None = None) -> Sample:
    if modality is None:
        modality = Modality.RGB if desc.aux_path is None else Modality.RGBD
    modality = Modality.parse(modality)
    rgb = resize_image(read_rgb(desc.rgb_path), target_size)
    if desc.gt_path is not None:
        gt = resize_mask(read_mask(desc.gt_path), target_size)
    else:
        gt = torch.zeros(1, *target_size)
    aux = None
    if modality.has_aux:
        if desc.aux_path is None:
            raise ContractViolation(f"{desc.id}: modality {modality.value} needs an auxiliary image")
        aux = resize_image(read_aux(desc.aux_path), target_size)
    return Sample(id=desc.id, rgb=rgb, gt=gt, modality=modality, aux=aux)


def load_dataset(spec: DatasetSpec, workers: int = 0, require_gt: bool = True) -> tuple[list[Sample], ScanResult]:
    scan = scan_dataset(spec, require_gt=require_gt)

    def _load(d):
        return load_sample(d, spec.target_size, spec.modality)

    if workers > 0:
        with ThreadPoolExecutor(workers) as pool:
            samples = list(pool.map(_load, scan.descriptors))
    else:
        samples = [_load(d) for d in scan.descriptors]
    return samples, scan


@dataclass
class Batch:
    rgb: torch.Tensor
    aux: torch.Tensor
    gt: torch.Tensor
    modality: Modality
    ids: list[str]

    def __len__(self):
        return len(self.ids)


def make_batch(samples: Sequence[Sample]) -> Batch:
    """Stack samples.  For RGB batches ``aux`` is the very same tensor as ``rgb``."""
    if not samples:
        raise ContractViolation("cannot build a batch from an empty list")
    modality = samples[0].modality
    size = samples[0].size
    for s in samples:
        if s.modality is not modality:
            raise ContractViolation(f"mixed modalities in batch: {modality.value} and {s.modality.value}")
        if s.size != size:
            raise ContractViolation(f"mixed sizes in batch: {size} and {s.size}")
    rgb = torch.stack([s.rgb for s in samples])
    gt = torch.stack([s.gt for s in samples])
    aux = torch.stack([s.aux for s in samples]) if modality.has_aux else rgb
    return Batch(rgb=rgb, aux=aux, gt=gt, modality=modality, ids=[s.id for s in samples])


def _plane(arr: np.ndarray) -> np.ndarray:
    while arr.ndim > 2 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ContractViolation(f"expected a single-channel map, got shape {arr.shape}")
    return arr


def save_mask(mask: torch.Tensor | np.ndarray, path: str | Path) -> None:
    arr = mask.detach().cpu().numpy() if isinstance(mask, torch.Tensor) else np.asarray(mask)
    arr = _plane(arr)
    Image.fromarray(np.where(arr > 0.5, 255, 0).astype(np.uint8)).save(path)


def save_saliency(saliency: torch.Tensor | np.ndarray, path: str | Path) -> None:
    """8-bit grayscale PNG with values round(255 * s)."""
    arr = saliency.detach().cpu().double().numpy() if isinstance(saliency, torch.Tensor) else np.asarray(saliency, dtype=np.float64)
    arr = _plane(arr)
    Image.fromarray(np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)).save(path)
