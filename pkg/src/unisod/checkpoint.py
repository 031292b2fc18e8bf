"""Checkpoint archives: named tensors plus a JSON manifest in one file."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import torch

from .errors import CheckpointError
from .model import ModelConfig, UniSOD

FORMAT = "unisod-checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    tensors: dict[str, torch.Tensor]
    manifest: dict[str, Any]
    optimizer: dict | None = None
    rng: torch.Tensor | None = None

    @property
    def kind(self) -> str:
        return self.manifest.get("kind", "model")

    @property
    def step(self) -> int:
        return int(self.manifest.get("step", 0))

    def model_config(self) -> ModelConfig:
        cfg = dict(self.manifest["model_config"])
        cfg["channels"] = tuple(cfg["channels"])
        return ModelConfig(**cfg)


def atomic_write_bytes(path: Path, write) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def save_checkpoint(
    path: str | Path,
    model: UniSOD,
    manifest: dict[str, Any],
    optimizer: torch.optim.Optimizer | None = None,
    prompts_only: bool = False,
) -> Path:
    state = model.state_dict()
    if prompts_only:
        state = {k: v for k, v in state.items() if k.startswith("spg.")}
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "kind": "prompts" if prompts_only else "model",
        "model_config": model.config.to_dict(),
        **manifest,
    }
    payload = {
        "format": FORMAT,
        "tensors": {k: v.detach().clone() for k, v in state.items()},
        "manifest": json.dumps(manifest, sort_keys=True),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "rng": torch.get_rng_state(),
    }
    path = Path(path)
    atomic_write_bytes(path, lambda tmp: torch.save(payload, tmp))
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch raises a zoo of types for corrupt archives
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} archive")
    manifest = json.loads(payload["manifest"])
    if manifest.get("version") != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {manifest.get('version')} unsupported (expected {VERSION})")
    return Checkpoint(payload["tensors"], manifest, payload.get("optimizer"), payload.get("rng"))


def restore_tensors(model: UniSOD, ckpt: Checkpoint, strict: bool = True) -> None:
    """Copy checkpoint tensors into ``model`` in place, checking shapes."""
    own = model.state_dict()
    unknown = sorted(set(ckpt.tensors) - set(own))
    if unknown:
        raise CheckpointError(f"checkpoint v{ckpt.manifest.get('version')} has tensors the model lacks: {unknown[:5]}")
    if strict and ckpt.kind == "model":
        missing = sorted(set(own) - set(ckpt.tensors))
        if missing:
            raise CheckpointError(f"checkpoint v{ckpt.manifest.get('version')} is missing tensors: {missing[:5]}")
    for name, value in ckpt.tensors.items():
        if own[name].shape != value.shape:
            raise CheckpointError(
                f"checkpoint v{ckpt.manifest.get('version')}: {name} has shape {tuple(value.shape)}, "
                f"model expects {tuple(own[name].shape)}"
            )
    with torch.no_grad():
        for name, value in ckpt.tensors.items():
            own[name].copy_(value)


def model_from_checkpoint(ckpt: Checkpoint) -> UniSOD:
    model = UniSOD(ckpt.model_config())
    restore_tensors(model, ckpt)
    return model
