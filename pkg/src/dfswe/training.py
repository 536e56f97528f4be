"""Maximum-likelihood training of one flow on a folder of images.

The loop is deliberately boring: Adam with linear warmup, gradient-norm
clipping, uniform dequantization noise, data-dependent actnorm init on the
first batch, periodic checkpoints. Batch order and noise derive only from
(seed, step), so a resumed run replays the exact step stream.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import cv2
import numpy as np
import torch

from .config import GlowConfig
from .errors import ConfigError, DataError, TrainingDiverged
from .flow import GlowNet
from .storage import read_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp", ".tif", ".tiff"}


@dataclass
class TrainConfig:
    data_dir: str
    out_path: str
    image_size: int = 32
    channels: int = 3
    levels: int = 3
    steps_per_level: int = 8
    hidden_width: int = 256
    n_bits: int = 8
    epochs: int = 1
    max_steps: int | None = None
    batch_size: int = 32
    learning_rate: float = 1e-4
    gradient_clip_norm: float = 50.0
    warmup_steps: int = 10
    seed: int = 0
    checkpoint_every: int = 200
    resume_from: str | None = None

    def glow_config(self) -> GlowConfig:
        return GlowConfig(
            channels=self.channels, height=self.image_size, width=self.image_size,
            levels=self.levels, steps_per_level=self.steps_per_level,
            hidden_width=self.hidden_width, n_bits=self.n_bits)

    def to_dict(self) -> dict:
        return asdict(self)


class ImageFolderDataset:
    """Eagerly loaded folder of images, center-cropped and resized to a
    fixed square size, always 3-channel uint8."""

    def __init__(self, images: list[np.ndarray], skipped: int):
        self.images = images
        self.skipped = skipped

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.images[i]


def _prepare(raw: np.ndarray, size: int) -> np.ndarray:
    if raw.ndim == 2:
        raw = np.stack([raw] * 3, axis=-1)
    if raw.shape[2] == 4:
        raw = raw[:, :, :3]
    if raw.dtype == np.uint16:
        raw = (raw >> 8).astype(np.uint8)
    h, w = raw.shape[:2]
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    crop = raw[top:top + side, left:left + side]
    out = cv2.resize(crop, (size, size), interpolation=cv2.INTER_AREA)
    return np.ascontiguousarray(out.transpose(2, 0, 1))


def ingest_dataset(data_dir: str | Path, image_size: int) -> ImageFolderDataset:
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"not a directory: {data_dir}")
    paths = sorted(p for p in data_dir.iterdir()
                   if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    images, skipped = [], 0
    for p in paths:
        raw = cv2.imread(str(p), cv2.IMREAD_UNCHANGED)
        if raw is None:
            log.warning("skipping undecodable image: %s", p)
            skipped += 1
            continue
        bgr_or_gray = raw if raw.ndim == 2 else cv2.cvtColor(
            raw[:, :, :3], cv2.COLOR_BGR2RGB)
        images.append(_prepare(bgr_or_gray, image_size))
    if not images:
        raise DataError(f"no decodable images in {data_dir}")
    return ImageFolderDataset(images, skipped)


def _batch_to_model_space(batch: np.ndarray, n_bits: int,
                          rng: np.random.Generator) -> torch.Tensor:
    levels = 2 ** n_bits
    noise = rng.random(size=batch.shape, dtype=np.float32)
    x = (batch.astype(np.float32) + noise) / np.float32(levels) - np.float32(0.5)
    return torch.from_numpy(x)


def train(config: TrainConfig) -> Path:
    """Train to convergence or step budget; returns the checkpoint path.

    A non-finite loss aborts the run, leaving the last good checkpoint on
    disk. A `<out>.history.csv` sidecar records per-step bits/dim.
    """
    glow_cfg = config.glow_config()  # validates sizes before any data work
    if config.epochs < 1 and config.max_steps is None:
        raise ConfigError("need epochs >= 1 or an explicit max_steps")
    dataset = ingest_dataset(config.data_dir, config.image_size)
    n = len(dataset)
    batch_size = min(config.batch_size, n)
    steps_per_epoch = max(1, n // batch_size)
    total_steps = config.epochs * steps_per_epoch
    if config.max_steps is not None:
        total_steps = min(total_steps, config.max_steps) if config.epochs >= 1 \
            else config.max_steps
    out_path = Path(config.out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    start_step = 0
    if config.resume_from:
        net, header = read_checkpoint(config.resume_from)
        if header["glow_config"] != glow_cfg.to_dict():
            raise ConfigError("resume checkpoint was trained with a different architecture")
        start_step = int(header.get("step") or 0)
        log.info("resuming from %s at step %d", config.resume_from, start_step)
    else:
        net = GlowNet(glow_cfg, seed=config.seed)
    net.train()

    optimizer = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    history: list[tuple[int, float]] = []
    checkpointed = False

    def save(step: int) -> None:
        # Never overwrite a good checkpoint with a corrupt state.
        try:
            validate_parameters(net)
        except ModelError as exc:
            net.eval()
            raise TrainingDiverged(
                f"model state failed validation at step {step} ({exc}); last good "
                f"checkpoint {'kept at ' + str(out_path) if checkpointed else 'was never written'}"
            ) from exc
        save_checkpoint(net, out_path, train_config=config.to_dict(), step=step)

    for step in range(start_step, total_steps):
        epoch, pos = divmod(step, steps_per_epoch)
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        idx = order[pos * batch_size:(pos + 1) * batch_size]
        batch = np.stack([dataset[int(i)] for i in idx])
        rng = np.random.default_rng([config.seed, step, 1])
        x = _batch_to_model_space(batch, config.n_bits, rng)

        if step == 0:
            with torch.no_grad():
                net.initialize_actnorm(x)

        _, bpd = net.log_likelihood(x)
        loss = bpd.mean()
        if not torch.isfinite(loss):
            net.eval()
            raise TrainingDiverged(
                f"non-finite loss at step {step}; last good checkpoint "
                f"{'kept at ' + str(out_path) if checkpointed else 'was never written'}")

        lr = config.learning_rate * min(1.0, (step + 1) / max(1, config.warmup_steps))
        for group in optimizer.param_groups:
            group["lr"] = lr
        optimizer.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(net.parameters(), config.gradient_clip_norm)
        optimizer.step()

        history.append((step, float(loss.item())))
        if (step + 1) % config.checkpoint_every == 0:
            save(step + 1)
            checkpointed = True
        if step % 50 == 0:
            log.info("step %d/%d: %.4f bits/dim (lr %.2e)", step, total_steps,
                     loss.item(), lr)

    net.eval()
    save(total_steps)
    _write_history(out_path, history)
    return out_path


def history_path(checkpoint_path: str | Path) -> Path:
    p = Path(checkpoint_path)
    return p.with_name(p.name + ".history.csv")


def _write_history(out_path: Path, history: list[tuple[int, float]]) -> None:
    with open(history_path(out_path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "bits_per_dim"])
        writer.writerows(history)


def windowed_mean(values: list[float], center: int, half_width: int = 10) -> float:
    lo = max(0, center - half_width)
    hi = min(len(values), center + half_width)
    return float(np.mean(values[lo:hi])) if hi > lo else math.nan
