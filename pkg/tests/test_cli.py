import json

import numpy as np
import pytest
from PIL import Image

from unisod.cli import main
from unisod.synthetic import fusion_set, rgb_set, write_dataset


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("UNISOD_PROFILE", raising=False)
    write_dataset(tmp_path / "rgb", rgb_set(4))
    write_dataset(tmp_path / "rgbd", fusion_set(4))
    (tmp_path / "pre.cfg").write_text("data.root = rgb\ntrain.max_steps = 3\n")
    (tmp_path / "rgbd.cfg").write_text("data.root = rgbd\ndata.modality = RGBD\ntrain.max_steps = 3\n")
    return tmp_path


def test_full_pipeline(workspace, capsys):
    assert main(["pretrain", "pre.cfg", "--out", "pre", "--seed", "3"]) == 0
    manifest = json.loads((workspace / "pre" / "run_manifest.json").read_text())
    assert manifest["command"] == "pretrain" and manifest["config"]["train.seed"] == 3
    assert len(manifest["inputs_sha256"]) == 64 and manifest["steps"] == 3

    assert main(["prompt-tune", "rgbd.cfg", "--task", "rgbd", "--init", "pre/last.pt", "--out", "pt"]) == 0
    out = capsys.readouterr().out
    assert "fraction 0.1769" in out
    part = json.loads((workspace / "pt" / "partition.json").read_text())
    assert part["trainable_count"] == 392160

    # odd-sized input comes back at its own size
    Image.fromarray((np.random.default_rng(0).random((50, 70, 3)) * 255).astype(np.uint8)).save(workspace / "rgbd" / "RGB" / "odd.png")
    Image.fromarray(np.zeros((50, 70), np.uint16)).save(workspace / "rgbd" / "Aux" / "odd.png")
    args = ["predict", "--checkpoint", "pre/last.pt", "--input", "rgbd/RGB", "--aux", "rgbd/Aux"]
    assert main(args + ["--prompts", "pt/prompts_rgbd.pt", "--out", "tuned"]) == 0
    assert main(args + ["--out", "plain"]) == 0
    assert Image.open(workspace / "tuned" / "odd.png").size == (70, 50)
    assert Image.open(workspace / "tuned" / "0000.png").mode == "L"
    assert json.loads((workspace / "plain" / "run_manifest.json").read_text())["config"]["prompt_mode"] == "none"

    assert main(["evaluate", "--pred", "tuned", "--gt", "rgbd/GT", "--out", "eval/scores.csv"]) == 0
    summary = json.loads((workspace / "eval" / "scores.json").read_text())
    assert summary["count"] == 4 and summary["rejects"] == [["odd", "missing ground truth"]]
    assert (workspace / "eval" / "scores.manifest.json").is_file()


def test_params_full_size_profile(workspace, capsys, monkeypatch):
    monkeypatch.setenv("UNISOD_PROFILE", "paper")
    assert main(["params", "--out", "p"]) == 0
    report = json.loads((workspace / "p" / "params.json").read_text())
    assert report["profile"] == "paper" and report["trainable_count"] == 25_071_360
    assert report["trainable_fraction"] < 0.2


def test_exit_codes(workspace, capsys):
    assert main(["pretrain", "pre.cfg", "--set", "data.root=missing"]) == 2
    assert "missing" in capsys.readouterr().err
    assert main(["pretrain", "pre.cfg", "--set", "train.bogus=1"]) == 2
    assert "train.bogus" in capsys.readouterr().err
    assert main(["prompt-tune", "pre.cfg", "--task", "rgbt", "--init", "x.pt"]) == 2
    assert main(["predict", "--checkpoint", "none.pt", "--input", "rgb/RGB", "--out", "o"]) == 3
    (workspace / "rgb" / "RGB" / "0000.png").write_bytes(b"broken")
    assert main(["pretrain", "pre.cfg"]) == 3
    with pytest.raises(SystemExit) as exc:
        main(["prompt-tune", "pre.cfg"])
    assert exc.value.code == 2


def test_prompt_checkpoint_must_match_model(workspace):
    assert main(["pretrain", "pre.cfg", "--out", "a"]) == 0
    assert main(["prompt-tune", "rgbd.cfg", "--task", "rgbd", "--init", "a/last.pt", "--out", "pt"]) == 0
    assert main(["pretrain", "pre.cfg", "--out", "b", "--set", "transformer.layers=1"]) == 0
    code = main(["predict", "--checkpoint", "b/last.pt", "--prompts", "pt/prompts_rgbd.pt", "--input", "rgbd/RGB", "--aux", "rgbd/Aux", "--out", "o"])
    assert code == 3
