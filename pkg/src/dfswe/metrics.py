"""Image quality and capacity metrics over 8-bit images.

SSIM here is the global-statistics variant (one set of moments per channel,
no sliding window), with the usual stabilizing constants.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

SSIM_K1 = 0.01
SSIM_K2 = 0.03
PEAK = 255.0


def _as_pair(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise DataError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x.astype(np.float64), y.astype(np.float64)


def mse(x: np.ndarray, y: np.ndarray) -> float:
    a, b = _as_pair(x, y)
    return float(np.mean((a - b) ** 2))


def rmse(x: np.ndarray, y: np.ndarray) -> float:
    return math.sqrt(mse(x, y))


def psnr(x: np.ndarray, y: np.ndarray) -> float:
    """10 log10(255^2 / MSE); identical images give +inf."""
    m = mse(x, y)
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK ** 2 / m)


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Global SSIM per channel, averaged over channels."""
    a, b = _as_pair(x, y)
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    c1 = (SSIM_K1 * PEAK) ** 2
    c2 = (SSIM_K2 * PEAK) ** 2
    vals = []
    for ch in range(a.shape[0]):
        xa, yb = a[ch], b[ch]
        mu_x, mu_y = xa.mean(), yb.mean()
        var_x, var_y = xa.var(), yb.var()
        cov = ((xa - mu_x) * (yb - mu_y)).mean()
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
        vals.append(num / den)
    return float(np.mean(vals))


def bpp(secret_shapes: list[tuple[int, int, int]], stego_hw: tuple[int, int]) -> float:
    """Payload bits per stego pixel, at 8 bits per secret channel sample."""
    h, w = stego_hw
    if h <= 0 or w <= 0:
        raise DataError("stego image must have positive area")
    bits = sum(8 * c * hh * ww for c, hh, ww in secret_shapes)
    return bits / (h * w)


def bit_accuracy(x: np.ndarray, y: np.ndarray) -> float:
    """Fraction of equal bits over the 8-bit expansions of all pixels."""
    a = np.asarray(x)
    b = np.asarray(y)
    if a.shape != b.shape:
        raise DataError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = np.bitwise_xor(a.astype(np.uint8), b.astype(np.uint8))
    wrong = np.unpackbits(diff.reshape(-1)).sum()
    return 1.0 - wrong / (8.0 * a.size)


def detection_error(p_fa: float, p_md: float) -> float:
    """Mean of false-alarm and missed-detection rates; 0.5 is a blind detector."""
    for name, v in (("p_fa", p_fa), ("p_md", p_md)):
        if not 0.0 <= v <= 1.0:
            raise DataError(f"{name} must lie in [0, 1], got {v}")
    return (p_fa + p_md) / 2.0


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    rmse: float
    bpp: float = 0.0
    bit_accuracy: float = 0.0
    pe: float | None = None


def compare_images(original: np.ndarray, extracted: np.ndarray) -> MetricReport:
    return MetricReport(
        psnr=psnr(original, extracted),
        ssim=ssim(original, extracted),
        rmse=rmse(original, extracted),
        bit_accuracy=bit_accuracy(original, extracted))


def write_metrics_csv(path: str | Path, rows: list[dict]) -> None:
    path = Path(path)
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def summarize(rows: list[dict]) -> dict:
    """Means of every finite numeric column."""
    summary: dict[str, float] = {"count": len(rows)}
    if not rows:
        return summary
    for key in rows[0]:
        vals = [r[key] for r in rows if isinstance(r[key], (int, float))]
        finite = [v for v in vals if math.isfinite(v)]
        if vals:
            summary[f"mean_{key}"] = float(np.mean(finite)) if finite else math.inf
    return summary


def write_summary_json(path: str | Path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")


__all__ = [
    "mse", "rmse", "psnr", "ssim", "bpp", "bit_accuracy", "detection_error",
    "MetricReport", "compare_images", "write_metrics_csv", "summarize",
    "write_summary_json",
]
