"""Synthetic image factories shared by the test suite.

The structured family keeps per-image variation concentrated at fine
scales on top of a fixed smooth base, which is the regime this pipeline
is designed for: the discarded deep latent block then carries little
per-image information.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np


def _upsample(field: np.ndarray, size: int) -> np.ndarray:
    # field: (3, s, s) -> (3, size, size), smooth
    out = [cv2.resize(ch, (size, size), interpolation=cv2.INTER_CUBIC)
           for ch in field]
    return np.stack(out)


def structured_images(n: int, size: int, seed: int, base_seed: int,
                      coarse_amp: float = 0.01, fine_amp: float = 0.05,
                      ) -> np.ndarray:
    """(n, 3, size, size) uint8 images: fixed smooth base per `base_seed`,
    small smooth per-image deviation, moderate fine-grained texture."""
    base_rng = np.random.default_rng(base_seed)
    base = _upsample(base_rng.uniform(0.25, 0.75, size=(3, 4, 4)), size)
    rng = np.random.default_rng(seed)
    out = np.empty((n, 3, size, size), dtype=np.uint8)
    for i in range(n):
        coarse = _upsample(rng.normal(0.0, coarse_amp, size=(3, 4, 4)), size)
        fine = rng.normal(0.0, fine_amp, size=(3, size, size))
        x = np.clip(base + coarse + fine, 0.0, 1.0)
        out[i] = np.clip(np.floor(x * 256.0), 0, 255).astype(np.uint8)
    return out


def texture_images(n: int, size: int, seed: int) -> np.ndarray:
    """Out-of-domain family: hard-edged random block textures."""
    rng = np.random.default_rng(seed)
    out = np.empty((n, 3, size, size), dtype=np.uint8)
    for i in range(n):
        blocks = rng.uniform(0.1, 0.9, size=(3, size // 4, size // 4))
        x = np.repeat(np.repeat(blocks, 4, axis=1), 4, axis=2)
        x = np.clip(x + rng.normal(0, 0.02, size=x.shape), 0, 1)
        out[i] = np.clip(np.floor(x * 256.0), 0, 255).astype(np.uint8)
    return out


def write_image_dir(images: np.ndarray, directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(images):
        p = directory / f"img_{i:04d}.png"
        cv2.imwrite(str(p), cv2.cvtColor(img.transpose(1, 2, 0), cv2.COLOR_RGB2BGR))
        paths.append(p)
    return paths
