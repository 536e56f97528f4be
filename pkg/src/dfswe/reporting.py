"""Figure rendering for the report paths. Every figure lands next to its
CSV so a report is always a (delimited data, picture) pair."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _finite(values):
    return [v for v in values if isinstance(v, (int, float)) and math.isfinite(v)]


def save_metrics_figure(rows: list[dict], path: str | Path) -> Path:
    """Histograms of the per-pair quality metrics."""
    path = Path(path)
    keys = [k for k in ("psnr", "ssim", "rmse", "bit_accuracy") if rows and k in rows[0]]
    fig, axes = plt.subplots(1, max(1, len(keys)), figsize=(3.2 * max(1, len(keys)), 2.8))
    if len(keys) <= 1:
        axes = [axes]
    for ax, key in zip(axes, keys):
        vals = _finite([r[key] for r in rows])
        if vals:
            ax.hist(vals, bins=min(20, max(5, len(vals) // 2)), color="#4878cf")
        ax.set_xlabel(key)
        ax.set_ylabel("pairs")
    fig.suptitle("extraction quality")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_ablation_figure(rows: list[dict], path: str | Path) -> Path:
    """Bar chart: stego realism (bits/dim, lower is better) and extraction
    PSNR per tactic combination."""
    path = Path(path)
    labels = [r["tactics"] for r in rows]
    bpd = [r["stego_bits_per_dim"] for r in rows]
    psnr = [r["psnr"] if math.isfinite(r["psnr"]) else 0.0 for r in rows]
    x = range(len(rows))
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(max(5, 1.1 * len(rows)), 5.5), sharex=True)
    ax1.bar(x, bpd, color="#4878cf")
    ax1.set_ylabel("stego bits/dim")
    ax2.bar(x, psnr, color="#6acc65")
    ax2.set_ylabel("extracted PSNR (dB)")
    ax2.set_xticks(list(x))
    ax2.set_xticklabels(labels, rotation=30, ha="right")
    fig.suptitle("tactic ablation")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_training_curve(history: list[tuple[int, float]], path: str | Path) -> Path:
    path = Path(path)
    steps = [s for s, _ in history]
    bpd = [b for _, b in history]
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(steps, bpd, lw=1.0, color="#4878cf")
    ax.set_xlabel("step")
    ax.set_ylabel("bits/dim")
    ax.set_title("training loss")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
