"""Flat ``key=value`` configuration with named profiles.

Config files hold one dotted key per line::

    # comment
    transformer.layers=4
    backbone.channels=16,32,64,128

Values are coerced to the type of the profile default for that key, so an
unknown key or an uncoercible value fails loudly with the key name.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError

PROFILE_ENV = "UNISOD_PROFILE"

_COMMON: dict[str, Any] = {
    "backbone.variant": "toy_conv",
    "backbone.bias": True,
    "transformer.layers": 4,
    "transformer.mlp_ratio": 4,
    "decoder.width": 64,
    "decoder.bias": True,
    "loss.alpha_smooth": 10.0,
    "loss.w_bce": 1.0,
    "loss.w_smooth": 1.0,
    "loss.w_dice": 1.0,
    "train.weight_decay": 0.0,
    "train.seed": 0,
    "train.deterministic": True,
    "train.max_steps": 0,
    "train.checkpoint_every": 0,
    "train.log_every": 1,
    "data.root": "",
    "data.rgb_dir": "RGB",
    "data.gt_dir": "GT",
    "data.aux_dir": "Aux",
    "data.modality": "RGB",
    "data.workers": 0,
    "prompt.concat_tokens": 1,
}

PROFILES: dict[str, dict[str, Any]] = {
    # desk-scale runs: small encoder, 64x64 inputs, a learning rate that
    # converges within a few hundred steps
    "toy": {
        **_COMMON,
        "backbone.channels": (16, 32, 64, 128),
        "model.image_size": 64,
        "train.lr": 1e-3,
        "pretrain.batch_size": 4,
        "pretrain.epochs": 5,
        "prompt.batch_size": 4,
        "prompt.epochs": 5,
    },
    # published protocol: 384x384 inputs, AdamW at 1e-5, 4x200 / 8x300
    "paper": {
        **_COMMON,
        "backbone.channels": (128, 256, 512, 1024),
        "model.image_size": 384,
        "train.lr": 1e-5,
        "decoder.width": 256,
        "pretrain.batch_size": 4,
        "pretrain.epochs": 200,
        "prompt.batch_size": 8,
        "prompt.epochs": 300,
    },
}


def default_profile() -> str:
    name = os.environ.get(PROFILE_ENV, "toy")
    if name not in PROFILES:
        raise ConfigError(f"{PROFILE_ENV}={name!r} is not one of {sorted(PROFILES)}")
    return name


def _coerce(key: str, raw: Any, default: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {type(default).__name__}") from None
    return text


class Config(dict):
    """Resolved configuration: a profile's defaults plus overrides."""

    profile: str = "toy"

    @classmethod
    def load(
        cls,
        path: str | os.PathLike | None = None,
        overrides: Mapping[str, Any] | list[str] | None = None,
        profile: str | None = None,
    ) -> "Config":
        profile = profile or default_profile()
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}")
        cfg = cls(PROFILES[profile])
        cfg.profile = profile
        if path is not None:
            cfg.update_from(parse_file(path))
        if overrides:
            if isinstance(overrides, list):
                overrides = parse_assignments(overrides)
            cfg.update_from(overrides)
        return cfg

    def update_from(self, values: Mapping[str, Any]) -> None:
        for key, raw in values.items():
            if key not in self:
                raise ConfigError(f"unknown config key {key!r}")
            self[key] = _coerce(key, raw, self[key])

    def to_text(self) -> str:
        lines = []
        for key in sorted(self):
            value = self[key]
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.items())}


def parse_assignments(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_file(path: str | os.PathLike) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    lines = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return parse_assignments(lines)
