"""End-to-end hiding and extraction over a pair of flow models.

Hide: initialize carrier latents (prior-knowledge sampling unless disabled),
encode each secret, circulate the payloads into the carrier, render and
quantize the stego image. Extract replays the chain backwards. Both are
pure functions of (models, inputs, options); all randomness comes from the
seed in the options.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .circulation import (
    KEYLESS,
    RECEIPT,
    HideReceipt,
    circulate_extract,
    circulate_hide,
    pks_initialize,
    plan_allocation,
)
from .errors import DataError, ReceiptError
from .flow import GlowModel, LatentStack, sample_latents
from .images import MODEL, ImageTensor, dequantize

TACTIC_NAMES = ("pks", "hdsr", "dct")


@dataclass(frozen=True)
class Tactics:
    """The three hide-time tactics; all-on is the full method.

    pks:  initialize carrier latents from a rendered-and-re-encoded sample
          instead of a raw Gaussian draw.
    hdsr: write payloads only into the shallow carrier blocks, preserving
          the deepest block.
    dct:  moment-match each written run to the values it replaces.
    """

    pks: bool = True
    hdsr: bool = True
    dct: bool = True

    @property
    def label(self) -> str:
        on = [n for n in TACTIC_NAMES if getattr(self, n)]
        return "+".join(on) if on else "none"


@dataclass(frozen=True)
class HideOptions:
    tactics: Tactics = field(default_factory=Tactics)
    mode: str = KEYLESS
    temperature: float = 0.7
    seed: int = 0
    stego_bit_depth: int = 8
    debug_skip_quantization: bool = False

    def __post_init__(self):
        if self.mode not in (KEYLESS, RECEIPT):
            raise DataError(f"unknown mode {self.mode!r}")
        if self.stego_bit_depth not in (8, 16):
            raise DataError(f"stego bit depth must be 8 or 16, got {self.stego_bit_depth}")
        if self.temperature < 0:
            raise DataError(f"temperature must be >= 0, got {self.temperature}")


def _encode_secret(model_se: GlowModel, secret: ImageTensor) -> LatentStack:
    if secret.bit_depth is None:
        raise DataError("secrets must be quantized images")
    stack, _ = model_se.forward(dequantize(secret))
    return stack


def hide(model_se: GlowModel, model_st: GlowModel, secrets: list[ImageTensor],
         opts: HideOptions = HideOptions()) -> tuple[ImageTensor, HideReceipt]:
    """Generate a stego image carrying `secrets`. Returns it with the receipt.

    With `debug_skip_quantization` the stego stays a float model-space image
    and carries its exact latent stack, so tests can separate circulation
    error from quantization error.
    """
    if not secrets:
        raise DataError("need at least one secret image")
    k = len(secrets)
    if opts.tactics.pks:
        carrier, _ = pks_initialize(model_st, opts.temperature, opts.seed)
    else:
        carrier = sample_latents(model_st.config, opts.temperature, opts.seed)

    secret_stacks = [_encode_secret(model_se, s) for s in secrets]
    plan = plan_allocation(model_se.config, model_st.config, k, opts.tactics.hdsr)
    new_carrier, receipt = circulate_hide(
        secret_stacks, carrier, plan, mode=opts.mode,
        dct_enabled=opts.tactics.dct, seed=opts.seed,
        temperature=opts.temperature)

    if opts.debug_skip_quantization:
        float_img = model_st.inverse(new_carrier)
        stego = ImageTensor(float_img.pixels, MODEL,
                            latents=tuple(np.copy(z) for z in new_carrier))
    else:
        stego = model_st.generate(new_carrier, bit_depth=opts.stego_bit_depth)
    return stego, receipt


def _resolve_plan(model_se: GlowModel, model_st: GlowModel, k: int,
                  receipt: HideReceipt | None, opts: HideOptions):
    plan = plan_allocation(model_se.config, model_st.config, k, opts.tactics.hdsr)
    if receipt is None:
        return plan
    if plan.fingerprint == receipt.fingerprint:
        return plan
    # The receipt pins the plan; the one free input is the deep-block flag.
    flipped = plan_allocation(model_se.config, model_st.config, k,
                              not opts.tactics.hdsr)
    if flipped.fingerprint == receipt.fingerprint:
        return flipped
    raise ReceiptError(
        "receipt fingerprint matches neither allocation plan derivable from "
        "these models and k; wrong models, k, or a tampered receipt")


def extract(model_se: GlowModel, model_st: GlowModel, stego: ImageTensor,
            k: int, receipt: HideReceipt | None = None,
            opts: HideOptions = HideOptions()) -> list[ImageTensor]:
    """Recover k secret images from a stego image.

    No authentication is attempted: feeding an arbitrary image still yields
    k (garbage) images. A receipt, when given, must match k and the plan.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if receipt is not None and receipt.k != k:
        raise ReceiptError(f"receipt is for k={receipt.k}, extraction asked k={k}")
    plan = _resolve_plan(model_se, model_st, k, receipt, opts)

    if stego.latents is not None:
        carrier = [np.asarray(z) for z in stego.latents]
    else:
        if stego.bit_depth is None:
            raise DataError("stego image must be quantized (or carry debug latents)")
        carrier, _ = model_st.forward(dequantize(stego))

    stacks = circulate_extract(carrier, plan, receipt=receipt,
                               dct_enabled=opts.tactics.dct)
    return [model_se.generate(zs, bit_depth=8) for zs in stacks]


# All eight tactic combinations, baseline (direct replacement) first.
FULL_GRID = tuple(
    Tactics(pks=p, hdsr=h, dct=d)
    for p in (False, True) for h in (False, True) for d in (False, True))


def ablate(model_se: GlowModel, model_st: GlowModel, secrets: list[ImageTensor],
           grid: tuple[Tactics, ...] = FULL_GRID, trials: int = 8,
           seed: int = 0, stego_bit_depth: int = 8) -> list[dict]:
    """Run hide/extract per tactic combination and tabulate stego realism
    (bits/dim under the carrier model) and extraction quality."""
    if not secrets:
        raise DataError("need at least one secret image")
    rows = []
    for tactics in grid:
        bpds, psnrs, ssims, rmses = [], [], [], []
        for t in range(trials):
            secret = secrets[t % len(secrets)]
            opts = HideOptions(tactics=tactics, mode=RECEIPT, seed=seed + t,
                               stego_bit_depth=stego_bit_depth)
            stego, receipt = hide(model_se, model_st, [secret], opts)
            _, bpd = model_st.log_likelihood(dequantize(stego))
            recovered = extract(model_se, model_st, stego, 1, receipt, opts)[0]
            bpds.append(bpd)
            psnrs.append(metrics.psnr(secret.pixels, recovered.pixels))
            ssims.append(metrics.ssim(secret.pixels, recovered.pixels))
            rmses.append(metrics.rmse(secret.pixels, recovered.pixels))
        rows.append({
            "tactics": tactics.label,
            "pks": tactics.pks, "hdsr": tactics.hdsr, "dct": tactics.dct,
            "trials": trials,
            "stego_bits_per_dim": float(np.mean(bpds)),
            "psnr": float(np.mean(psnrs)),
            "ssim": float(np.mean(ssims)),
            "rmse": float(np.mean(rmses)),
        })
    return rows


def with_tactics(opts: HideOptions, **kwargs) -> HideOptions:
    """Convenience: a copy of `opts` with some tactics toggled."""
    return replace(opts, tactics=replace(opts.tactics, **kwargs))
