"""Reversible circulation of latents between the two flows.

Hiding works in three moves. The carrier latent stack is first initialized
by prior-knowledge sampling: draw Gaussian latents, render them to a
quantized image, and re-encode it, so the starting point lies exactly on
the decodable-image manifold. A deterministic allocation plan then maps
each secret's flattened latents onto a region of the carrier stack:
with deep-block preservation on, only the shallow carrier blocks (all but
the last) are writable, because shallow latents dominate reversibility
while the untouched deep block keeps the rendered image natural. Finally,
each written run is passed through a moment-matching affine map so it
carries the statistics of the values it replaces.

Every move has an exact inverse; extraction replays them backwards. The
moment-matching scalars either travel in a receipt (exact inversion) or
are re-estimated from the recovered run itself (keyless, assumes the
standard-normal prior).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .config import GlowConfig, latent_shapes
from .errors import DataError, PlanError, ReceiptError, SegmentError
from .flow import GlowModel, LatentStack, sample_latents
from .images import ImageTensor, dequantize

KEYLESS = "keyless"
RECEIPT = "receipt"
PLAN_VERSION = 1


def flatten_stack(zs: LatentStack) -> np.ndarray:
    """Blocks in order, each row-major over (channel, row, column)."""
    return np.concatenate([np.asarray(z).reshape(-1) for z in zs])


def unflatten_stack(vec: np.ndarray, shapes) -> LatentStack:
    out, pos = [], 0
    for shape in shapes:
        n = int(np.prod(shape))
        out.append(vec[pos:pos + n].reshape(shape).astype(np.float32))
        pos += n
    if pos != vec.size:
        raise DataError(f"flattened length {vec.size} does not match shapes (need {pos})")
    return out


@dataclass(frozen=True)
class PlanSegment:
    """One contiguous run: payload[payload_offset:+length] of one secret is
    written at carrier block `block_index`, element `offset`."""

    secret_index: int
    block_index: int
    offset: int
    length: int
    payload_offset: int


@dataclass(frozen=True)
class CirculationPlan:
    """Deterministic mapping of k secret payloads onto carrier latents.

    A pure function of the public configs, so sender and receiver always
    derive the same plan; `fingerprint` hashes those inputs.
    """

    k: int
    hdsr: bool
    secret_shapes: tuple[tuple[int, int, int], ...]
    stego_shapes: tuple[tuple[int, int, int], ...]
    replace_len: int
    budget: int
    payload_len: int
    segments: tuple[PlanSegment, ...]
    fingerprint: str

    @property
    def secret_elements(self) -> int:
        return sum(int(np.prod(s)) for s in self.secret_shapes)


def plan_fingerprint(cfg_se: GlowConfig, cfg_st: GlowConfig, k: int, hdsr: bool) -> str:
    payload = {
        "version": PLAN_VERSION,
        "k": k,
        "hdsr": bool(hdsr),
        "secret": [cfg_se.channels, cfg_se.height, cfg_se.width, cfg_se.levels],
        "stego": [cfg_st.channels, cfg_st.height, cfg_st.width, cfg_st.levels],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def plan_allocation(cfg_se: GlowConfig, cfg_st: GlowConfig, k: int,
                    hdsr: bool = True) -> CirculationPlan:
    """Budgeted flatten-order allocation of k payloads into the carrier.

    The writable region is the carrier's shallow blocks (all but the deepest)
    when `hdsr` is on, or the whole stack when off. Each secret receives an
    equal share b = floor(R / k) of that region and contributes the first b
    elements of its own flattened stack, so truncation always drops the
    deepest latent elements first.
    """
    if k < 1:
        raise PlanError(f"need at least one secret, got k={k}")
    se_shapes = tuple(latent_shapes(cfg_se))
    st_shapes = tuple(latent_shapes(cfg_st))
    st_sizes = [int(np.prod(s)) for s in st_shapes]
    total = sum(st_sizes)
    n_writable = len(st_sizes) - 1 if hdsr else len(st_sizes)
    replace_len = sum(st_sizes[:n_writable])
    budget = replace_len // k
    if budget < 1:
        raise PlanError(
            f"budget exhausted: {k} secrets cannot share {replace_len} writable "
            f"latent elements")
    secret_total = sum(int(np.prod(s)) for s in se_shapes)
    payload_len = min(budget, secret_total)

    starts = np.concatenate([[0], np.cumsum(st_sizes)])
    segments: list[PlanSegment] = []
    for j in range(k):
        pos = j * budget
        payload_off = 0
        remaining = payload_len
        block = int(np.searchsorted(starts, pos, side="right")) - 1
        while remaining > 0:
            offset = pos - int(starts[block])
            run = min(remaining, st_sizes[block] - offset)
            segments.append(PlanSegment(j, block, offset, run, payload_off))
            pos += run
            payload_off += run
            remaining -= run
            if remaining > 0:
                block += 1
    return CirculationPlan(
        k=k, hdsr=hdsr, secret_shapes=se_shapes, stego_shapes=st_shapes,
        replace_len=replace_len, budget=budget, payload_len=payload_len,
        segments=tuple(segments),
        fingerprint=plan_fingerprint(cfg_se, cfg_st, k, hdsr))


@dataclass(frozen=True)
class DctParams:
    """Moment-matching scalars for one segment (population statistics).

    The composite map is x -> x * scale + shift with scale = std_tgt/std_src
    and shift = mean_tgt - scale * mean_src; apply followed by invert is the
    exact identity.
    """

    mean_src: float
    std_src: float
    mean_tgt: float
    std_tgt: float

    @property
    def scale(self) -> float:
        return self.std_tgt / self.std_src

    @property
    def shift(self) -> float:
        return self.mean_tgt - self.scale * self.mean_src


IDENTITY_PARAMS = DctParams(0.0, 1.0, 0.0, 1.0)


def _moments(seg: np.ndarray) -> tuple[float, float]:
    x = np.asarray(seg, dtype=np.float64)
    mean = float(x.mean())
    std = float(x.std())  # population
    return mean, std


def dct_fit(src: np.ndarray, tgt: np.ndarray) -> DctParams:
    src = np.asarray(src)
    tgt = np.asarray(tgt)
    if src.size != tgt.size:
        raise SegmentError(f"segment length mismatch: {src.size} vs {tgt.size}")
    if src.size < 2:
        raise SegmentError(f"segments need at least 2 elements, got {src.size}")
    mean_src, std_src = _moments(src)
    mean_tgt, std_tgt = _moments(tgt)
    if std_src == 0.0 or std_tgt == 0.0:
        raise SegmentError("degenerate segment: zero variance")
    return DctParams(mean_src, std_src, mean_tgt, std_tgt)


def dct_apply(seg: np.ndarray, params: DctParams) -> np.ndarray:
    x = np.asarray(seg, dtype=np.float64)
    return (x * params.scale + params.shift).astype(np.asarray(seg).dtype)


def dct_invert(seg: np.ndarray, params: DctParams) -> np.ndarray:
    if params.scale == 0.0:
        raise SegmentError("cannot invert a zero scale")
    x = np.asarray(seg, dtype=np.float64)
    return ((x - params.shift) / params.scale).astype(np.asarray(seg).dtype)


@dataclass(frozen=True)
class ReceiptSegment:
    secret_index: int
    block_index: int
    offset: int
    length: int
    mean_src: float
    std_src: float
    mean_tgt: float
    std_tgt: float

    def params(self) -> DctParams:
        return DctParams(self.mean_src, self.std_src, self.mean_tgt, self.std_tgt)


@dataclass(frozen=True)
class HideReceipt:
    """Side information from a hide: the plan fingerprint plus, in receipt
    mode, the per-segment moment scalars needed for exact inversion."""

    version: int
    mode: str
    k: int
    fingerprint: str
    seed: int | None
    temperature: float | None
    segments: tuple[ReceiptSegment, ...] = ()


def pks_initialize(model_st: GlowModel, temperature: float,
                   seed: int) -> tuple[LatentStack, ImageTensor]:
    """Prior-knowledge sampling of the carrier latents.

    Sample, render, quantize, re-encode: the returned stack decodes exactly
    to the returned image, which is what survives an image round trip.
    """
    z = sample_latents(model_st.config, temperature, seed)
    rendered = model_st.generate(z)
    stack, _ = model_st.forward(dequantize(rendered))
    return stack, rendered


def _check_stack_shapes(zs: LatentStack, shapes, what: str) -> None:
    if len(zs) != len(shapes):
        raise DataError(f"{what}: expected {len(shapes)} blocks, got {len(zs)}")
    for i, (z, shape) in enumerate(zip(zs, shapes)):
        if tuple(z.shape) != tuple(shape):
            raise DataError(f"{what}: block {i} has shape {tuple(z.shape)}, expected {shape}")


def circulate_hide(secret_stacks: list[LatentStack], carrier: LatentStack,
                   plan: CirculationPlan, mode: str = KEYLESS,
                   dct_enabled: bool = True, seed: int | None = None,
                   temperature: float | None = None,
                   ) -> tuple[LatentStack, HideReceipt]:
    """Write each secret's payload into the carrier under the plan.

    Positions outside all plan segments keep their carrier values
    bit-exactly; in particular the deepest block is untouched whenever the
    plan preserves it.
    """
    if mode not in (KEYLESS, RECEIPT):
        raise DataError(f"unknown mode {mode!r}")
    if len(secret_stacks) != plan.k:
        raise DataError(f"plan expects {plan.k} secrets, got {len(secret_stacks)}")
    for s in secret_stacks:
        _check_stack_shapes(s, plan.secret_shapes, "secret latents")
    _check_stack_shapes(carrier, plan.stego_shapes, "carrier latents")

    flat = flatten_stack(carrier).copy()
    starts = np.concatenate(
        [[0], np.cumsum([int(np.prod(s)) for s in plan.stego_shapes])])
    payloads = [flatten_stack(s)[:plan.payload_len] for s in secret_stacks]

    recorded: list[ReceiptSegment] = []
    for seg in plan.segments:
        src = payloads[seg.secret_index][seg.payload_offset:seg.payload_offset + seg.length]
        pos = int(starts[seg.block_index]) + seg.offset
        tgt = flat[pos:pos + seg.length]
        params = dct_fit(src, tgt) if dct_enabled else IDENTITY_PARAMS
        flat[pos:pos + seg.length] = dct_apply(src, params)
        if mode == RECEIPT:
            recorded.append(ReceiptSegment(
                seg.secret_index, seg.block_index, seg.offset, seg.length,
                params.mean_src, params.std_src, params.mean_tgt, params.std_tgt))

    receipt = HideReceipt(
        version=1, mode=mode, k=plan.k, fingerprint=plan.fingerprint,
        seed=seed, temperature=temperature, segments=tuple(recorded))
    return unflatten_stack(flat, plan.stego_shapes), receipt


def circulate_extract(carrier: LatentStack, plan: CirculationPlan,
                      receipt: HideReceipt | None = None,
                      dct_enabled: bool = True) -> list[LatentStack]:
    """Read the payloads back out of the carrier and rebuild secret stacks.

    With a receipt the affine maps are inverted exactly. Keyless extraction
    standardizes each recovered run to zero mean and unit spread, which is
    exact whenever the original payload run already had those moments (the
    flow prior). Latent positions beyond the payload are filled with 0.0,
    the prior's mode.
    """
    _check_stack_shapes(carrier, plan.stego_shapes, "carrier latents")
    use_receipt = receipt is not None and receipt.mode == RECEIPT
    if receipt is not None:
        if receipt.fingerprint != plan.fingerprint:
            raise ReceiptError("receipt fingerprint does not match the derived plan")
        if receipt.k != plan.k:
            raise ReceiptError(f"receipt is for k={receipt.k}, plan has k={plan.k}")
        if use_receipt and len(receipt.segments) != len(plan.segments):
            raise ReceiptError("receipt segment count does not match the plan")

    flat = flatten_stack(carrier)
    starts = np.concatenate(
        [[0], np.cumsum([int(np.prod(s)) for s in plan.stego_shapes])])
    payloads = [np.zeros(plan.payload_len, dtype=np.float64) for _ in range(plan.k)]

    for i, seg in enumerate(plan.segments):
        pos = int(starts[seg.block_index]) + seg.offset
        values = flat[pos:pos + seg.length].astype(np.float64)
        if use_receipt:
            rec = receipt.segments[i]
            if (rec.secret_index, rec.block_index, rec.offset, rec.length) != (
                    seg.secret_index, seg.block_index, seg.offset, seg.length):
                raise ReceiptError("receipt segment layout does not match the plan")
            values = dct_invert(values, rec.params())
        elif dct_enabled:
            mean = values.mean()
            std = values.std()
            if std == 0.0:
                raise SegmentError("degenerate recovered segment: zero variance")
            values = (values - mean) / std
        payloads[seg.secret_index][seg.payload_offset:seg.payload_offset + seg.length] = values

    total = plan.secret_elements
    out: list[LatentStack] = []
    for payload in payloads:
        full = np.zeros(total, dtype=np.float32)
        full[:plan.payload_len] = payload.astype(np.float32)
        out.append(unflatten_stack(full, plan.secret_shapes))
    return out
