import csv
import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

import oracles
from unisod import metrics as M
from unisod.errors import ConfigError, ContractViolation


def _pair(rng, shape=(8, 8)):
    s = rng.random(shape)
    g = rng.random(shape) < rng.uniform(0.1, 0.8)
    return s, g


@pytest.mark.parametrize("seed", range(25))
def test_against_literal_oracles(seed):
    rng = np.random.default_rng(seed)
    s, g = _pair(rng)
    if seed % 3 == 0:
        s = np.round(s)  # many ties at the thresholds
    assert M.mae(s, g) == pytest.approx(oracles.mae(s, g), abs=1e-12)
    assert M.s_measure(s, g) == pytest.approx(oracles.s_measure(s, g), abs=1e-10)
    assert M.e_measure(s, g, "mean") == pytest.approx(oracles.e_measure_mean(s, g), abs=1e-10)
    assert M.e_measure(s, g, "adaptive") == pytest.approx(oracles.e_measure_adaptive(s, g), abs=1e-10)
    assert M.weighted_f(s, g) == pytest.approx(oracles.weighted_f(s, g), abs=1e-10)


def test_e_curve_matches_threshold_by_threshold():
    rng = np.random.default_rng(7)
    s, g = _pair(rng, (6, 9))
    curve = M.e_measure_curve(s, g)
    for k in (0, 1, 100, 200, 255):
        assert curve[k] == pytest.approx(oracles.e_at_threshold(s, g, (2 * k + 1) / 512), abs=1e-12)


def test_perfect_and_inverted_predictions():
    rng = np.random.default_rng(3)
    g = rng.random((16, 16)) > 0.6
    s = g.astype(np.float64)
    assert (M.mae(s, g), M.s_measure(s, g), M.e_measure(s, g), M.e_measure(s, g, "adaptive"), M.weighted_f(s, g)) == (0.0, 1.0, 1.0, 1.0, 1.0)
    assert M.mae(1.0 - s, g) == 1.0


def test_centroid_is_one_based_with_half_away_rounding():
    g = np.zeros((4, 4), bool)
    g[0, 0] = g[0, 1] = True
    # column mean 1.5 rounds to 2, row 1
    assert M.centroid(g) == (2, 1)
    assert M.centroid(np.zeros((5, 7), bool)) == (4, 3)


def test_empty_ground_truth():
    s = np.full((6, 6), 0.25)
    g = np.zeros((6, 6), bool)
    assert M.s_measure(s, g) == 0.75
    assert M.e_measure(np.zeros((6, 6)), g) == 1.0
    with pytest.warns(M.DegenerateGroundTruth):
        assert M.weighted_f(s, g) == 0.0


def test_full_ground_truth():
    s = np.full((4, 4), 0.75)
    g = np.ones((4, 4), bool)
    assert M.s_measure(s, g) == 0.75
    # 192 of the 256 midpoint thresholds lie below 0.75
    assert M.e_measure(s, g) == 0.75


def test_zero_prediction_scores_zero_fw_on_interior_object():
    g = np.zeros((20, 20), bool)
    g[8:12, 7:13] = True
    assert M.weighted_f(np.zeros((20, 20)), g) == 0.0


def test_shape_mismatch():
    with pytest.raises(ContractViolation):
        M.mae(np.zeros((3, 3)), np.zeros((3, 4)))


maps = arrays(np.float64, (7, 9), elements=st.floats(0, 1, allow_nan=False, width=32))
masks = arrays(np.bool_, (7, 9))


@settings(max_examples=60, deadline=None)
@given(maps, masks)
def test_ranges_and_perfect_dominance(s, g):
    scores = [M.s_measure(s, g), M.e_measure(s, g), M.e_measure(s, g, "adaptive")]
    if g.any():
        scores.append(M.weighted_f(s, g))
    for v in scores:
        assert 0.0 <= v <= 1.0 + 1e-12
    assert 0.0 <= M.mae(s, g) <= 1.0


@settings(max_examples=60, deadline=None)
@given(maps, masks)
def test_mae_complement(s, g):
    assert M.mae(s, g) + M.mae(1.0 - s, g) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(maps, masks)
def test_flip_invariance(s, g):
    f = np.fliplr
    assert M.mae(f(s), f(g)) == pytest.approx(M.mae(s, g), abs=1e-12)
    assert M.e_measure(f(s), f(g)) == pytest.approx(M.e_measure(s, g), abs=1e-12)
    assert M.e_measure(f(s), f(g), "adaptive") == pytest.approx(M.e_measure(s, g, "adaptive"), abs=1e-12)
    if g.any() and not g.all():
        assert M.s_object(f(s), f(g)) == pytest.approx(M.s_object(s, g), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), masks)
def test_fw_flip_invariance_for_flat_foreground(v, g):
    if not g.any():
        return
    s = np.where(g, v, 0.0)
    assert M.weighted_f(np.fliplr(s), np.fliplr(g)) == pytest.approx(M.weighted_f(s, g), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(maps, masks, st.randoms(use_true_random=False))
def test_e_measure_ignores_pixel_order(s, g, rnd):
    perm = list(range(s.size))
    rnd.shuffle(perm)
    ps, pg = s.ravel()[perm].reshape(s.shape), g.ravel()[perm].reshape(g.shape)
    assert M.e_measure(ps, pg) == pytest.approx(M.e_measure(s, g), abs=1e-12)


def _write(d, name, arr):
    d.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(d / f"{name}.png")


def test_dataset_evaluation_csv_and_summary(tmp_path):
    rng = np.random.default_rng(0)
    gt_dir, pred_dir = tmp_path / "set" / "GT", tmp_path / "pred"
    for i in range(3):
        g = (rng.random((16, 16)) > 0.5).astype(np.uint8) * 255
        _write(gt_dir, f"{i}", g)
        _write(pred_dir, f"{i}", g if i == 0 else (rng.random((8, 8)) * 255).astype(np.uint8))
    _write(gt_dir, "empty", np.zeros((16, 16), np.uint8))
    _write(pred_dir, "empty", np.zeros((16, 16), np.uint8))
    _write(gt_dir, "orphan", np.zeros((16, 16), np.uint8))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        report = M.evaluate_dataset(pred_dir, gt_dir)
    assert report.dataset == "set"
    assert report.rejects == [("orphan", "missing prediction")]
    assert report.flags == [("empty", "empty ground truth")]
    report.write_csv(tmp_path / "r.csv")
    report.write_json(tmp_path / "r.json")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert tuple(rows[0]) == M.CSV_COLUMNS and len(rows) == 4
    assert float(rows[0]["mae"]) == 0.0 and float(rows[0]["s"]) == 1.0
    summary = json.loads((tmp_path / "r.json").read_text())
    assert summary["count"] == 4
    assert summary["mean"]["mae"] == pytest.approx(np.mean([float(r["mae"]) for r in rows]))


def test_missing_directory(tmp_path):
    with pytest.raises(ConfigError):
        M.evaluate_dataset(tmp_path / "a", tmp_path)
