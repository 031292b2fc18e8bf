"""The assembled saliency model: backbone, per-level transformers, decoder, SPG."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
from torch import nn

from .backbone import Backbone, BackboneConfig
from .decoder import Decoder
from .errors import ContractViolation
from .spg import SPG, pool_prompt_tokens
from .transformer import TransformerCore

# How the auxiliary stream enters the frozen model.
#   none    - plain RGB model (pre-training and the "pre-trained model" row)
#   sum     - SPG prompts added to the RGB features
#   concat  - SPG prompts pooled to tokens and appended to each sequence
#   direct  - auxiliary features added to the RGB features with no SPG
PROMPT_MODES = ("none", "sum", "concat", "direct")


@dataclass(frozen=True)
class ModelConfig:
    channels: tuple[int, int, int, int] = (16, 32, 64, 128)
    image_size: int = 64
    layers: int = 4
    mlp_ratio: int = 4
    decoder_width: int = 64
    backbone_variant: str = "toy_conv"
    backbone_bias: bool = True
    decoder_bias: bool = True
    concat_tokens: int = 1

    @classmethod
    def from_config(cls, cfg) -> "ModelConfig":
        return cls(
            channels=tuple(int(c) for c in cfg["backbone.channels"]),
            image_size=int(cfg["model.image_size"]),
            layers=int(cfg["transformer.layers"]),
            mlp_ratio=int(cfg["transformer.mlp_ratio"]),
            decoder_width=int(cfg["decoder.width"]),
            backbone_variant=cfg["backbone.variant"],
            backbone_bias=bool(cfg["backbone.bias"]),
            decoder_bias=bool(cfg["decoder.bias"]),
            concat_tokens=int(cfg["prompt.concat_tokens"]),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d


class UniSOD(nn.Module):
    def __init__(self, config: ModelConfig = ModelConfig(), encoder: nn.Module | None = None):
        super().__init__()
        self.config = config
        self.backbone = Backbone(
            BackboneConfig(config.channels, config.backbone_variant, config.backbone_bias), encoder
        )
        self.transformer = TransformerCore(config.channels, config.layers, config.image_size, config.mlp_ratio)
        self.decoder = Decoder(config.channels, config.decoder_width, config.decoder_bias)
        self.spg = SPG(config.channels)
        self.prompt_mode = "none"

    def prompts(self, rgb: torch.Tensor, aux: torch.Tensor | None = None):
        aux = rgb if aux is None else aux
        pyr_r, pyr_a = self.backbone.shared_extract(rgb, aux)
        return self.spg.generate_all(pyr_r, pyr_a)

    def encode(self, rgb: torch.Tensor, aux: torch.Tensor | None = None, prompt_mode: str | None = None):
        mode = self.prompt_mode if prompt_mode is None else prompt_mode
        if mode not in PROMPT_MODES:
            raise ContractViolation(f"unknown prompt mode {mode!r}")
        if mode == "none":
            return self.transformer.encode_pyramid(self.backbone.extract(rgb))
        aux = rgb if aux is None else aux
        pyr_r, pyr_a = self.backbone.shared_extract(rgb, aux)
        if mode == "direct":
            return self.transformer.encode_pyramid(pyr_r, pyr_a, "sum")
        prompts = self.spg.generate_all(pyr_r, pyr_a)
        if mode == "sum":
            return self.transformer.encode_pyramid(pyr_r, prompts, "sum")
        k = self.config.concat_tokens
        prompts = [prompts[0]] + [pool_prompt_tokens(p, k) for p in prompts[1:]]
        return self.transformer.encode_pyramid(pyr_r, prompts, "concat")

    def forward(self, rgb: torch.Tensor, aux: torch.Tensor | None = None, prompt_mode: str | None = None) -> torch.Tensor:
        if rgb.ndim == 3:
            rgb = rgb[None]
            aux = None if aux is None else aux[None]
        return self.decoder(self.encode(rgb, aux, prompt_mode))

    @torch.no_grad()
    def predict(self, rgb, aux=None, prompt_mode=None) -> torch.Tensor:
        was_training = self.training
        self.eval()
        try:
            return self(rgb, aux, prompt_mode)
        finally:
            self.train(was_training)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def namespace_counts(model: UniSOD) -> dict[str, int]:
    return {name: count_parameters(getattr(model, name)) for name in ("backbone", "transformer", "decoder", "spg")}
