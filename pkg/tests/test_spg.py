import pytest
import torch
import torch.nn.functional as F
from torch import nn

from oracles import parameter_count
from unisod.errors import AccountingError, ContractViolation
from unisod.spg import SPG, SPGBlock, count_trainable_fraction
from unisod.trainer import ParameterPartition

CH = (16, 32, 64, 128)


def _randomise(block):
    with torch.no_grad():
        for p in block.parameters():
            p.normal_(std=0.1)
    return block


def single_modal(block, f):
    """Independent single-stream form: refine f with a mask computed from itself."""
    m = torch.sigmoid(F.conv2d(f, block.mask_conv.weight, block.mask_conv.bias, padding=1))
    return F.conv2d(f * m + f, block.out_conv.weight, block.out_conv.bias, padding=1)


def test_switching_identity():
    block = _randomise(SPGBlock(8))
    for _ in range(10):
        f = torch.randn(2, 8, 6, 6)
        assert torch.equal(block(f, f), single_modal(block, f))


def test_delta_kernels_give_closed_form():
    c = 4
    block = SPGBlock(c)
    with torch.no_grad():
        block.mask_conv.weight.zero_()
        block.mask_conv.bias.zero_()
        block.out_conv.weight.zero_()
        for i in range(c):
            block.out_conv.weight[i, i, 1, 1] = 1.0
    f_r, f_a = torch.randn(1, c, 5, 5), torch.randn(1, c, 5, 5)
    assert torch.allclose(block(f_r, f_a), 0.5 * f_r + f_a, atol=1e-6)


def test_zero_initialised_output_conv():
    block = SPGBlock(8)
    f = torch.randn(1, 8, 4, 4)
    assert torch.equal(block(f, torch.randn_like(f)), torch.zeros_like(f))


def test_mask_strictly_inside_unit_interval():
    block = _randomise(SPGBlock(4))
    m = block.mask(torch.randn(1, 4, 8, 8)).detach()
    assert float(m.min()) > 0 and float(m.max()) < 1


def test_auxiliary_residual_carries_gradient():
    torch.manual_seed(0)
    block = _randomise(SPGBlock(3)).double()
    f_r = torch.randn(1, 3, 4, 4, dtype=torch.float64, requires_grad=True)
    f_a = torch.randn(1, 3, 4, 4, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(block, (f_r, f_a), eps=1e-6, atol=1e-5)
    # with the mask saturated at 0 the aux path still moves P
    with torch.no_grad():
        block.mask_conv.bias.fill_(-1e3)
    f_a.grad = None
    block(f_r, f_a).sum().backward()
    assert f_a.grad.abs().sum() > 0


def test_per_level_parameter_counts():
    spg = SPG(CH)
    counts = [parameter_count(spg.block(i)) for i in range(1, 5)]
    assert counts == [SPGBlock.closed_form_count(c) for c in CH] == [4640, 18496, 73856, 295168]


def test_generate_all_shapes_and_level_mismatch():
    spg = SPG(CH)
    pyr = [torch.randn(1, c, 16 // 2**i, 16 // 2**i) for i, c in enumerate(CH)]
    prompts = spg(pyr, pyr)
    assert [p.shape for p in prompts] == [f.shape for f in pyr]
    with pytest.raises(ContractViolation):
        spg(pyr, pyr[:3])
    with pytest.raises(ContractViolation):
        spg.block(1)(pyr[0], pyr[0][:, :, :2])


def test_fraction_accounting():
    assert count_trainable_fraction(ParameterPartition({}, {"a": 10})) == 0.0
    assert count_trainable_fraction(ParameterPartition({"a": 1}, {"b": 3})) == 0.25
    with pytest.raises(AccountingError):
        count_trainable_fraction(ParameterPartition({}, {}))
