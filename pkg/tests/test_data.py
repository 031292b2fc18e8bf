import numpy as np
import pytest
import torch
from PIL import Image

from unisod.config import Config
from unisod.data import (
    DatasetSpec,
    Modality,
    Sample,
    load_dataset,
    make_batch,
    read_aux,
    read_mask,
    read_rgb,
    resize_mask,
    save_saliency,
    scan_dataset,
)
from unisod.errors import ConfigError, ContractViolation, DataError
from unisod.synthetic import fusion_set, rgb_set, write_dataset


def _png(path, arr):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)
    return path


def test_mask_threshold_is_strict(tmp_path):
    arr = np.array([[0, 127, 128, 255]], dtype=np.uint8)
    m = read_mask(_png(tmp_path / "m.png", arr))
    assert m.tolist() == [[[0.0, 0.0, 1.0, 1.0]]]


def test_rgb_scaled_to_unit_range(tmp_path):
    arr = np.zeros((2, 2, 3), dtype=np.uint8)
    arr[0, 0] = (255, 0, 51)
    x = read_rgb(_png(tmp_path / "x.png", arr))
    assert x.shape == (3, 2, 2)
    assert x[:, 0, 0].tolist() == pytest.approx([1.0, 0.0, 0.2])


def test_sixteen_bit_depth_normalised_and_replicated(tmp_path):
    depth = np.array([[1000, 3000], [2000, 5000]], dtype=np.uint16)
    a = read_aux(_png(tmp_path / "d.png", depth))
    assert a.shape == (3, 2, 2)
    assert torch.equal(a[0], a[2])
    assert torch.allclose(a[0], torch.tensor([[0.0, 0.5], [0.25, 1.0]]))


def test_constant_depth_becomes_zero(tmp_path):
    a = read_aux(_png(tmp_path / "d.png", np.full((3, 3), 7, np.uint8)))
    assert a.abs().sum() == 0


def test_unreadable_file_is_data_error(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(DataError, match="bad.png"):
        read_rgb(bad)


def test_nearest_resize_keeps_mask_binary():
    m = (torch.rand(1, 13, 17) > 0.5).float()
    out = resize_mask(m, (64, 64))
    assert set(out.unique().tolist()) <= {0.0, 1.0}


def test_scan_reports_unmatched_stems(tmp_path):
    write_dataset(tmp_path, fusion_set(3, 32))
    (tmp_path / "Aux" / "0001.png").unlink()
    _png(tmp_path / "RGB" / "extra.png", np.zeros((32, 32, 3), np.uint8))
    scan = scan_dataset(DatasetSpec(tmp_path, Modality.RGBD))
    assert [d.id for d in scan.descriptors] == ["0000", "0002"]
    assert dict(scan.rejects) == {"0001": "missing in aux", "extra": "missing in gt,aux"}


def test_missing_root_is_config_error(tmp_path):
    with pytest.raises(ConfigError, match="nowhere"):
        scan_dataset(DatasetSpec(tmp_path / "nowhere"))


def test_load_dataset_round_trip(tmp_path):
    samples = rgb_set(4, 32)
    write_dataset(tmp_path, samples)
    loaded, scan = load_dataset(DatasetSpec(tmp_path, target_size=(32, 32)), workers=2)
    assert not scan.rejects and len(loaded) == 4
    for a, b in zip(samples, loaded):
        assert torch.equal(a.gt, b.gt)
        assert (a.rgb - b.rgb).abs().max() <= 0.5 / 255 + 1e-6


def test_sample_invariants():
    rgb, gt = torch.zeros(3, 8, 8), torch.zeros(1, 8, 8)
    with pytest.raises(ContractViolation):
        Sample("a", rgb, gt, Modality.RGBD)
    with pytest.raises(ContractViolation):
        Sample("a", rgb, torch.zeros(1, 4, 8))
    with pytest.raises(ContractViolation):
        Sample("a", rgb, gt, Modality.RGB, aux=rgb)


def test_rgb_batch_aliases_aux():
    batch = make_batch(rgb_set(2, 32))
    assert batch.aux is batch.rgb
    batch = make_batch(fusion_set(2, 32))
    assert batch.aux is not batch.rgb


def test_batch_rejects_mixed_modalities():
    with pytest.raises(ContractViolation, match="mixed"):
        make_batch(rgb_set(1, 32) + fusion_set(1, 32))
    with pytest.raises(ContractViolation):
        make_batch([])


def test_saliency_png_quantisation(tmp_path):
    s = torch.tensor([[0.0, 0.5, 0.999, 1.0]])
    save_saliency(s, tmp_path / "s.png")
    assert np.asarray(Image.open(tmp_path / "s.png")).tolist() == [[0, 128, 255, 255]]


def test_config_overrides_and_errors(tmp_path, monkeypatch):
    cfg_file = tmp_path / "c.cfg"
    cfg_file.write_text("# comment\ntransformer.layers = 2\nbackbone.channels=8,16,32,64\n")
    cfg = Config.load(cfg_file, ["train.deterministic=false", "train.lr=0.5"], profile="toy")
    assert cfg["transformer.layers"] == 2
    assert cfg["backbone.channels"] == (8, 16, 32, 64)
    assert cfg["train.deterministic"] is False and cfg["train.lr"] == 0.5
    with pytest.raises(ConfigError, match="nope"):
        Config.load(None, ["nope=1"])
    with pytest.raises(ConfigError, match="transformer.layers"):
        Config.load(None, ["transformer.layers=two"])
    monkeypatch.setenv("UNISOD_PROFILE", "paper")
    assert Config.load()["model.image_size"] == 384
