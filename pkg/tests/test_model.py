import pytest
import torch

from oracles import parameter_count
from unisod.config import Config
from unisod.errors import ContractViolation
from unisod.model import ModelConfig, UniSOD, namespace_counts
from unisod.trainer import partition_parameters


@pytest.mark.parametrize("mode", ["none", "sum", "concat", "direct"])
def test_forward_all_prompt_modes(toy_model, mode):
    rgb, aux = torch.rand(2, 3, 64, 64), torch.rand(2, 3, 64, 64)
    s = toy_model.predict(rgb, aux, mode)
    assert s.shape == (2, 1, 64, 64)
    assert torch.isfinite(s).all()


def test_single_image_and_rgb_only_input(toy_model):
    x = torch.rand(3, 64, 64)
    assert toy_model.predict(x).shape == (1, 1, 64, 64)
    # RGB-only prompting runs the SPG on the image against itself
    assert torch.equal(toy_model.predict(x, None, "sum"), toy_model.predict(x, x, "sum"))


def test_unknown_mode(toy_model):
    with pytest.raises(ContractViolation):
        toy_model(torch.rand(1, 3, 64, 64), None, "stack")


def test_namespace_counts_match_oracle(toy_model):
    counts = namespace_counts(toy_model)
    assert counts == {k: parameter_count(getattr(toy_model, k)) for k in counts}
    assert counts == {"backbone": 490544, "transformer": 1047424, "decoder": 286785, "spg": 392160}
    assert sum(counts.values()) == parameter_count(toy_model)


def test_full_width_accounting():
    model = UniSOD(ModelConfig.from_config(Config.load(profile="paper")))
    part = partition_parameters(model, "prompt_tune")
    assert part.trainable_count == 25_071_360
    assert part.trainable_count + part.frozen_count == parameter_count(model)
