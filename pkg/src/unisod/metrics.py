"""Saliency evaluation: MAE, S-measure, E-measure and weighted F-measure.

Inputs are 2-D arrays: a prediction in [0, 1] and a binary ground truth.
Small epsilon guards from the reference MATLAB code are only applied where
a denominator can actually reach zero, so perfect predictions score exactly
1 (or 0 for MAE).
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .data import IMAGE_SUFFIXES, MASK_THRESHOLD
from .errors import ConfigError, ContractViolation

CSV_COLUMNS = ("dataset", "image_id", "mae", "s", "e_mean", "e_adaptive", "fw")
METRIC_KEYS = CSV_COLUMNS[2:]

# 256 binarization thresholds at bin midpoints, so neither all-on nor all-off
# maps are produced from predictions that already lie in {0, 1}.
E_THRESHOLDS = (2 * np.arange(256) + 1) / 512.0


class DegenerateGroundTruth(UserWarning):
    """Ground truth has no foreground; the weighted F-measure is reported as 0."""


def _prepare(s, g) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(s, dtype=np.float64)
    g = np.asarray(g)
    if s.shape != g.shape:
        raise ContractViolation(f"prediction {s.shape} and ground truth {g.shape} differ in shape")
    if s.ndim != 2:
        s, g = np.squeeze(s), np.squeeze(g)
        if s.ndim != 2:
            raise ContractViolation(f"expected 2-D maps, got shape {s.shape}")
    return s, g > 0.5


def mae(s, g) -> float:
    s, g = _prepare(s, g)
    return float(np.mean(np.abs(s - g)))


# --------------------------------------------------------------------------
# S-measure


def _object_similarity(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    mu = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2.0 * mu / (mu * mu + 1.0 + sigma)


def s_object(s: np.ndarray, g: np.ndarray) -> float:
    u = g.mean()
    return u * _object_similarity(s[g]) + (1.0 - u) * _object_similarity(1.0 - s[~g])


def _round_half_away(x: float) -> int:
    return int(np.floor(x + 0.5))


def centroid(g: np.ndarray) -> tuple[int, int]:
    """1-based (column, row) split point, as in the MATLAB reference."""
    rows, cols = g.shape
    total = g.sum()
    if total == 0:
        return _round_half_away(cols / 2), _round_half_away(rows / 2)
    x = (g.sum(axis=0) * np.arange(1, cols + 1)).sum() / total
    y = (g.sum(axis=1) * np.arange(1, rows + 1)).sum() / total
    return _round_half_away(x), _round_half_away(y)


def _ssim(p: np.ndarray, g: np.ndarray) -> float:
    n = p.size
    if n == 0:
        return 0.0
    g = g.astype(np.float64)
    x, y = p.mean(), g.mean()
    dp, dg = p - x, g - y
    d = n - 1 if n > 1 else 1
    sx = np.sum(dp * dp) / d
    sy = np.sum(dg * dg) / d
    sxy = np.sum(dp * dg) / d
    alpha = 4.0 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return alpha / beta
    return 1.0 if beta == 0 else 0.0


def s_region(s: np.ndarray, g: np.ndarray) -> float:
    rows, cols = g.shape
    x, y = centroid(g)
    area = rows * cols
    w1 = x * y / area
    w2 = (cols - x) * y / area
    w3 = x * (rows - y) / area
    w4 = 1.0 - w1 - w2 - w3
    return (
        w1 * _ssim(s[:y, :x], g[:y, :x])
        + w2 * _ssim(s[:y, x:], g[:y, x:])
        + w3 * _ssim(s[y:, :x], g[y:, :x])
        + w4 * _ssim(s[y:, x:], g[y:, x:])
    )


def s_measure(s, g, alpha: float = 0.5) -> float:
    s, g = _prepare(s, g)
    y = g.mean()
    if y == 0:
        return float(1.0 - s.mean())
    if y == 1:
        return float(s.mean())
    q = alpha * s_object(s, g) + (1.0 - alpha) * s_region(s, g)
    return float(max(q, 0.0))


# --------------------------------------------------------------------------
# E-measure


def _enhanced_from_counts(n11, n10, n01, n00, n_fg, n):
    """Mean enhanced-alignment value given pixel counts per (binary, gt) class.

    ``n10`` counts pixels predicted foreground on ground-truth background.
    Arrays broadcast, so this evaluates many thresholds at once.
    """
    n11, n10, n01, n00 = (np.asarray(v, dtype=np.float64) for v in (n11, n10, n01, n00))
    if n_fg == 0:
        return (n01 + n00) / n
    if n_fg == n:
        return (n11 + n10) / n
    mu_b = (n11 + n10) / n
    mu_g = n_fg / n
    total = np.zeros(np.broadcast(n11, n10).shape)
    for b, gv, count in ((1.0, 1.0, n11), (1.0, 0.0, n10), (0.0, 1.0, n01), (0.0, 0.0, n00)):
        ab = b - mu_b
        ag = gv - mu_g
        phi = 2.0 * ab * ag / (ab * ab + ag * ag)
        total = total + count * (phi + 1.0) ** 2 / 4.0
    return total / n


def e_measure_curve(s, g, thresholds=E_THRESHOLDS) -> np.ndarray:
    """E-measure of ``s >= t`` for every threshold ``t``."""
    s, g = _prepare(s, g)
    n = s.size
    n_fg = int(g.sum())
    fg = np.sort(s[g])
    bg = np.sort(s[~g])
    n11 = fg.size - np.searchsorted(fg, thresholds, side="left")
    n10 = bg.size - np.searchsorted(bg, thresholds, side="left")
    return _enhanced_from_counts(n11, n10, n_fg - n11, (n - n_fg) - n10, n_fg, n)


def e_measure(s, g, variant: str = "mean") -> float:
    """``mean``: average over 256 thresholds; ``adaptive``: threshold 2*mean(s), capped at 1."""
    if variant == "mean":
        return float(e_measure_curve(s, g).mean())
    if variant == "adaptive":
        s_arr, _ = _prepare(s, g)
        thr = min(2.0 * s_arr.mean(), 1.0)
        return float(e_measure_curve(s, g, np.array([thr]))[0])
    raise ValueError(f"unknown E-measure variant {variant!r}")


# --------------------------------------------------------------------------
# weighted F-measure


def _gaussian_kernel(size: int = 7, sigma: float = 5.0) -> np.ndarray:
    r = (size - 1) / 2
    y, x = np.mgrid[-r : r + 1, -r : r + 1]
    k = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    return k / k.sum()


def weighted_f(s, g, beta2: float = 1.0) -> float:
    s, g = _prepare(s, g)
    if not g.any():
        warnings.warn("ground truth has no foreground; weighted F-measure set to 0", DegenerateGroundTruth, stacklevel=2)
        return 0.0
    err = np.abs(s - g)
    dist, idx = ndimage.distance_transform_edt(~g, return_indices=True)
    # background pixels take the error of their nearest foreground pixel
    et = err.copy()
    bg = ~g
    et[bg] = err[idx[0][bg], idx[1][bg]]
    ea = ndimage.correlate(et, _gaussian_kernel(), mode="constant", cval=0.0)
    min_e = err.copy()
    sel = g & (ea < err)
    min_e[sel] = ea[sel]
    weight = np.ones_like(err)
    weight[bg] = 2.0 - np.exp(np.log(0.5) / 5.0 * dist[bg])
    ew = min_e * weight
    tp = g.sum() - ew[g].sum()
    fp = ew[bg].sum()
    recall = 1.0 - ew[g].mean()
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    denom = beta2 * precision + recall
    if denom == 0:
        return 0.0
    return float((1.0 + beta2) * recall * precision / denom)


def evaluate_image(s, g) -> dict[str, float]:
    return {
        "mae": mae(s, g),
        "s": s_measure(s, g),
        "e_mean": e_measure(s, g, "mean"),
        "e_adaptive": e_measure(s, g, "adaptive"),
        "fw": weighted_f(s, g),
    }


# --------------------------------------------------------------------------
# dataset evaluation


@dataclass
class MetricReport:
    dataset: str
    rows: list[dict] = field(default_factory=list)
    rejects: list[tuple[str, str]] = field(default_factory=list)
    flags: list[tuple[str, str]] = field(default_factory=list)

    @property
    def means(self) -> dict[str, float]:
        if not self.rows:
            return {k: float("nan") for k in METRIC_KEYS}
        return {k: float(np.mean([r[k] for r in self.rows])) for k in METRIC_KEYS}

    def summary(self) -> dict:
        return {
            "dataset": self.dataset,
            "count": len(self.rows),
            "mean": self.means,
            "rejects": [list(r) for r in self.rejects],
            "flags": [list(f) for f in self.flags],
        }

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({"dataset": self.dataset, **row})

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2) + "\n")


def load_prediction(path: Path, size: tuple[int, int] | None = None) -> np.ndarray:
    img = Image.open(path).convert("L")
    if size is not None and img.size != (size[1], size[0]):
        img = img.resize((size[1], size[0]), Image.BILINEAR)
    return np.asarray(img, dtype=np.float64) / 255.0


def load_gt(path: Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")) > MASK_THRESHOLD


def _listing(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        raise ConfigError(f"directory does not exist: {directory}")
    return {p.stem: p for p in sorted(directory.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def evaluate_dataset(pred_dir: str | Path, gt_dir: str | Path, dataset: str | None = None) -> MetricReport:
    """Score every prediction against the ground truth with the same stem.

    Predictions are resized to the ground-truth size when they differ.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    preds, gts = _listing(pred_dir), _listing(gt_dir)
    report = MetricReport(dataset or gt_dir.parent.name or gt_dir.name)
    for stem in sorted(set(preds) | set(gts)):
        if stem not in preds:
            report.rejects.append((stem, "missing prediction"))
            continue
        if stem not in gts:
            report.rejects.append((stem, "missing ground truth"))
            continue
        g = load_gt(gts[stem])
        s = load_prediction(preds[stem], g.shape)
        if not g.any():
            report.flags.append((stem, "empty ground truth"))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateGroundTruth)
            row = evaluate_image(s, g)
        report.rows.append({"image_id": stem, **row})
    return report
