"""Image tensors and the exact quantization conventions.

Two float domains: "model" space is [-0.5, 0.5), "unit" space is [0, 1].
Quantized images carry integer pixels plus their bit depth. Inference-time
dequantization is the deterministic half-quantum offset so that hide and
extract agree bit-exactly; training adds uniform noise instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

MODEL = "model"
UNIT = "unit"


@dataclass(frozen=True)
class ImageTensor:
    """A C x H x W image with an explicit numeric domain.

    `bit_depth` is set when `pixels` are quantized integers (domain "unit").
    `latents` is a debug-only carrier: when a hide runs with quantization
    skipped, the exact stego latent stack rides along so extraction can
    bypass the image round trip.
    """

    pixels: np.ndarray
    domain: str = MODEL
    bit_depth: int | None = None
    latents: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        if self.pixels.ndim != 3:
            raise DataError(f"expected C x H x W pixels, got shape {self.pixels.shape}")
        if self.domain not in (MODEL, UNIT):
            raise DataError(f"unknown domain {self.domain!r}")
        if self.bit_depth is not None and not np.issubdtype(self.pixels.dtype, np.integer):
            raise DataError("quantized images must hold integer pixels")

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.pixels.shape)

    @classmethod
    def quantized(cls, pixels: np.ndarray, bit_depth: int | None = None) -> "ImageTensor":
        """Wrap an integer pixel array; bit depth is inferred from dtype if omitted."""
        if not np.issubdtype(pixels.dtype, np.integer):
            raise DataError(f"expected integer pixels, got dtype {pixels.dtype}")
        if bit_depth is None:
            bit_depth = 8 if pixels.dtype == np.uint8 else 16
        limit = 2 ** bit_depth
        if pixels.min() < 0 or pixels.max() >= limit:
            raise DataError(f"pixels out of range for {bit_depth}-bit images")
        return cls(pixels=pixels, domain=UNIT, bit_depth=bit_depth)


def unit_to_model(img: ImageTensor) -> ImageTensor:
    if img.domain != UNIT:
        raise DataError("unit_to_model expects a unit-space image")
    return ImageTensor(img.pixels.astype(np.float32) - np.float32(0.5), MODEL)


def model_to_unit(img: ImageTensor) -> ImageTensor:
    if img.domain != MODEL:
        raise DataError("model_to_unit expects a model-space image")
    return ImageTensor(img.pixels + np.float32(0.5), UNIT)


def dequantize(pixels: np.ndarray | ImageTensor,
               bit_depth: int | None = None,
               rng: np.random.Generator | None = None) -> ImageTensor:
    """Map integer pixels into model space.

    Inference (rng is None): (p + 0.5) / 2^n - 0.5, exactly.
    Training (rng given):    (p + u) / 2^n - 0.5 with u ~ U[0, 1).
    """
    if isinstance(pixels, ImageTensor):
        if pixels.bit_depth is None:
            raise DataError("dequantize expects a quantized image")
        bit_depth = pixels.bit_depth if bit_depth is None else bit_depth
        pixels = pixels.pixels
    if bit_depth is None:
        if pixels.dtype == np.uint8:
            bit_depth = 8
        elif pixels.dtype == np.uint16:
            bit_depth = 16
        else:
            raise DataError(f"cannot infer bit depth from dtype {pixels.dtype}")
    levels = 2 ** bit_depth
    if pixels.min() < 0 or pixels.max() >= levels:
        raise DataError(f"pixel values out of range for {bit_depth}-bit input")
    p = pixels.astype(np.float32)
    if rng is None:
        offset = np.float32(0.5)
    else:
        offset = rng.random(size=p.shape, dtype=np.float32)
    out = (p + offset) / np.float32(levels) - np.float32(0.5)
    return ImageTensor(out, MODEL)


def quantize(img: ImageTensor, bit_depth: int = 8) -> ImageTensor:
    """Clamp a model-space image to the representable range and quantize.

    p = clamp(floor((y + 0.5) * 2^n), 0, 2^n - 1).
    """
    if img.domain != MODEL:
        raise DataError("quantize expects a model-space image")
    levels = 2 ** bit_depth
    y = np.clip(img.pixels, -0.5, 0.5 - 1.0 / levels)
    p = np.floor((y + 0.5) * levels)
    p = np.clip(p, 0, levels - 1)
    dtype = np.uint8 if bit_depth <= 8 else np.uint16
    return ImageTensor(p.astype(dtype), UNIT, bit_depth=bit_depth)
