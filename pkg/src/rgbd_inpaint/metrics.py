"""RGB and depth inpainting metrics, the 1-d earth-mover distance, and the
evaluation driver that produces per-sample and mean reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.signal import correlate2d

from .data import Dataset, denormalize_depth, denormalize_rgb, sample_mask

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
DEPTH_EPS = 1e-3

METRIC_NAMES = ("rgb_l1", "rgb_psnr", "rgb_ssim", "depth_l1", "abs_rel", "sq_rel", "rmse", "rmse_log")
REGIONS = ("full", "hole_only")


class MetricError(ValueError):
    pass


def _region_values(pred, gt, mask=None):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricError(f"shape mismatch {pred.shape} vs {gt.shape}")
    if mask is None:
        return pred.ravel(), gt.ravel()
    sel = np.broadcast_to(np.asarray(mask) == 0, pred.shape)
    if not sel.any():
        raise MetricError("empty evaluation region")
    return pred[sel], gt[sel]


def l1_metric(pred, gt, region: str = "full", mask=None) -> float:
    """Mean absolute error; ``hole_only`` restricts to pixels where ``mask == 0``."""
    if region not in REGIONS:
        raise ValueError(f"unknown region {region!r}")
    if region == "hole_only" and mask is None:
        raise MetricError("hole_only region needs a mask")
    p, g = _region_values(pred, gt, mask if region == "hole_only" else None)
    if p.size == 0:
        raise MetricError("empty evaluation region")
    return float(np.mean(np.abs(p - g)))


def psnr(pred, gt, max_val: float = 1.0, mask=None) -> float:
    if max_val <= 0:
        raise ValueError("max_val must be positive")
    p, g = _region_values(pred, gt, mask)
    mse = float(np.mean((p - g) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(max_val ** 2 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Local SSIM for every fully contained 11x11 window of a 2-d image pair."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise MetricError(f"ssim needs equal 2-d images, got {a.shape} and {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise MetricError(f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    w = gaussian_window()

    def filt(x):
        return correlate2d(x, w, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def ssim(pred, gt, mask=None) -> float:
    """Mean SSIM, averaged over channels for (C, H, W) or (H, W, 3) input.

    With ``mask`` only windows centred on hole pixels count; NaN if none are.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricError(f"shape mismatch {pred.shape} vs {gt.shape}")
    if pred.ndim == 2:
        pred, gt = pred[None], gt[None]
    elif pred.ndim == 3 and pred.shape[-1] == 3 and pred.shape[0] != 3:
        pred, gt = pred.transpose(2, 0, 1), gt.transpose(2, 0, 1)
    select = None
    if mask is not None:
        r = SSIM_WINDOW // 2
        hole = np.asarray(mask).reshape(pred.shape[1:]) == 0
        select = hole[r : hole.shape[0] - r, r : hole.shape[1] - r]
        if not select.any():
            return float("nan")
    vals = []
    for pc, gc in zip(pred, gt):
        smap = ssim_map(pc, gc)
        vals.append(smap[select].mean() if select is not None else smap.mean())
    return float(np.mean(vals))


def depth_metrics(pred, gt, eps: float = DEPTH_EPS, mask=None) -> dict[str, float]:
    """abs_rel, sq_rel, rmse, rmse_log over pixels with gt > eps."""
    p, g = _region_values(pred, gt, mask)
    valid = g > eps
    if not valid.any():
        raise MetricError("no valid depth pixels")
    p, g = p[valid], g[valid]
    diff = p - g
    logd = np.log(np.maximum(p, eps)) - np.log(g)
    return {
        "abs_rel": float(np.mean(np.abs(diff) / g)),
        "sq_rel": float(np.mean(diff ** 2 / g)),
        "rmse": float(np.sqrt(np.mean(diff ** 2))),
        "rmse_log": float(np.sqrt(np.mean(logd ** 2))),
    }


def emd_1d(a, b) -> float:
    """Exact Wasserstein-1 distance between two equal-size empirical samples on the line."""
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size != b.size:
        raise ValueError(f"emd_1d needs equal sizes, got {a.size} and {b.size}")
    if a.size == 0:
        raise ValueError("emd_1d needs at least one point")
    return float(np.mean(np.abs(a - b)))


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class MetricsReport:
    ids: list[str]
    per_sample: dict[str, dict[str, list[float]]]  # region -> metric -> values
    meta: dict = field(default_factory=dict)

    def mean(self, region: str = "full") -> dict[str, float]:
        out = {}
        for name in METRIC_NAMES:
            vals = np.asarray(self.per_sample[region][name], dtype=np.float64)
            finite = vals[~np.isnan(vals)]
            out[name] = float(finite.mean()) if finite.size else float("nan")
        return out

    def to_json(self) -> dict:
        return {
            "meta": self.meta,
            "ids": self.ids,
            "regions": {
                region: {
                    name: {"per_sample": self.per_sample[region][name], "mean": self.mean(region)[name]}
                    for name in METRIC_NAMES
                }
                for region in REGIONS
            },
        }

    def write(self, out_dir, stem: str = "report") -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"{stem}.csv"
        json_path = out_dir / f"{stem}.json"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["region", "id", *METRIC_NAMES])
            for region in REGIONS:
                for i, sid in enumerate(self.ids):
                    w.writerow([region, sid, *(repr(self.per_sample[region][n][i]) for n in METRIC_NAMES)])
                means = self.mean(region)
                w.writerow([region, "MEAN", *(repr(means[n]) for n in METRIC_NAMES)])
        json_path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))
        return csv_path, json_path


def sample_metrics(rgb_pred, rgb_gt, depth_pred, depth_gt, mask=None) -> dict[str, float]:
    """All eight metrics for one sample.

    RGB arrays are (3, S, S) in [0, 1]; depth arrays (S, S) in raw units.
    ``mask`` (S, S) restricts to hole pixels when given.
    """
    out = {
        "rgb_l1": l1_metric(rgb_pred, rgb_gt, "hole_only" if mask is not None else "full",
                            None if mask is None else np.broadcast_to(mask, rgb_pred.shape)),
        "rgb_psnr": psnr(rgb_pred, rgb_gt, 1.0, None if mask is None else np.broadcast_to(mask, rgb_pred.shape)),
        "rgb_ssim": ssim(rgb_pred, rgb_gt, mask),
        "depth_l1": l1_metric(depth_pred, depth_gt, "hole_only" if mask is not None else "full", mask),
    }
    out.update(depth_metrics(depth_pred, depth_gt, mask=mask))
    return out


Predictor = Callable[[np.ndarray, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def evaluate(predict: Predictor, dataset: Dataset, seed: int = 0, batch_size: int = 8) -> MetricsReport:
    """Mask each sample (seeded), inpaint, composite, denormalize and score.

    ``predict(z_c, z_d, m)`` takes normalized batches (B,3,S,S), (B,1,S,S),
    (B,1,S,S) and returns raw (rgb, depth) predictions of the same shapes.
    """
    if len(dataset) == 0:
        raise MetricError("empty dataset")
    rng = np.random.default_rng(seed)
    size = dataset.image_size
    masks = np.stack([sample_mask(rng, size)[1] for _ in range(len(dataset))])[:, None]
    per = {r: {n: [] for n in METRIC_NAMES} for r in REGIONS}
    for start in range(0, len(dataset), batch_size):
        idx = np.arange(start, min(start + batch_size, len(dataset)))
        x_c, x_d = dataset.batch(idx)
        x_c = x_c.astype(np.float64)
        x_d = x_d.astype(np.float64)
        m = masks[idx].astype(x_c.dtype)
        z_c, z_d = x_c * m, x_d * m
        raw_c, raw_d = predict(z_c.astype(dataset.rgb.dtype), z_d.astype(dataset.rgb.dtype), m.astype(dataset.rgb.dtype))
        out_c = z_c + np.asarray(raw_c, dtype=np.float64) * (1 - m)
        out_d = z_d + np.asarray(raw_d, dtype=np.float64) * (1 - m)
        for k in range(len(idx)):
            rgb_p = np.clip(denormalize_rgb(out_c[k]) / 255.0, 0, 1)
            rgb_g = denormalize_rgb(x_c[k]) / 255.0
            dep_p = denormalize_depth(out_d[k, 0], dataset.d_max)
            dep_g = denormalize_depth(x_d[k, 0], dataset.d_max)
            for region, mk in (("full", None), ("hole_only", m[k, 0])):
                vals = sample_metrics(rgb_p, rgb_g, dep_p, dep_g, mk)
                for n in METRIC_NAMES:
                    per[region][n].append(vals[n])
    return MetricsReport(list(dataset.ids), per, {"seed": seed, "d_max": dataset.d_max, "image_size": size})
