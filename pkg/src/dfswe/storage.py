"""Bit-exact persistence: PNG images, binary model checkpoints, receipts.

Stego images must survive byte-for-byte, so writes are PNG-only and all
file writes go through a temp-file rename. Checkpoints are a small binary
container: magic, version, a canonical-JSON header describing config and
weight records, the raw little-endian weight bytes, and a trailing SHA-256
over everything before it.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import asdict
from pathlib import Path

import cv2
import numpy as np
import torch

from .circulation import HideReceipt, ReceiptSegment
from .config import GlowConfig
from .errors import DataError, ModelError
from .flow import GlowModel, GlowNet

CHECKPOINT_MAGIC = b"DFSWE"
CHECKPOINT_VERSION = 1
RECEIPT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8", "uint8": "u1", "int64": "<i8"}


def read_image(path: str | Path) -> np.ndarray:
    """Load an image as a (C, H, W) uint8 or uint16 array, RGB order."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise DataError(f"cannot decode image: {path}")
    if raw.ndim == 2:
        return raw[None, :, :]
    if raw.shape[2] == 4:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGRA2BGR)
    rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return np.ascontiguousarray(rgb.transpose(2, 0, 1))


def write_image(path: str | Path, pixels: np.ndarray) -> None:
    """Write (C, H, W) uint8/uint16 pixels as PNG; other formats are lossy
    or depth-limited and are refused."""
    path = Path(path)
    if path.suffix.lower() != ".png":
        raise DataError(
            f"refusing to write {path.suffix or 'extension-less'} output: "
            "carrier images must be stored losslessly as .png")
    if pixels.dtype not in (np.uint8, np.uint16):
        raise DataError(f"unsupported pixel dtype {pixels.dtype}")
    if pixels.ndim != 3 or pixels.shape[0] not in (1, 3):
        raise DataError(f"expected (C, H, W) pixels with 1 or 3 channels, got {pixels.shape}")
    hwc = pixels.transpose(1, 2, 0)
    bgr = cv2.cvtColor(hwc, cv2.COLOR_RGB2BGR) if hwc.shape[2] == 3 else hwc[:, :, 0]
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp.png")
    if not cv2.imwrite(str(tmp), bgr):
        raise DataError(f"failed to write image: {path}")
    os.replace(tmp, path)


def _atomic_write_bytes(path: Path, blob: bytes) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def save_checkpoint(model: GlowModel | GlowNet, path: str | Path,
                    train_config: dict | None = None, step: int | None = None) -> Path:
    net = model.net if isinstance(model, GlowModel) else model
    state = net.state_dict()
    names = sorted(state.keys())
    records = []
    payload = bytearray()
    for name in names:
        arr = state[name].detach().cpu().numpy()
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise ModelError(f"unsupported parameter dtype {dtype} for {name}")
        raw = np.ascontiguousarray(arr).astype(_DTYPES[dtype]).tobytes()
        records.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        payload.extend(raw)

    header = {
        "format_version": CHECKPOINT_VERSION,
        "glow_config": net.config.to_dict(),
        "train_config": train_config,
        "step": step,
        "weights": records,
    }
    header_blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    blob = bytearray()
    blob.extend(CHECKPOINT_MAGIC)
    blob.extend(struct.pack("<I", CHECKPOINT_VERSION))
    blob.extend(struct.pack("<Q", len(header_blob)))
    blob.extend(header_blob)
    blob.extend(payload)
    blob.extend(hashlib.sha256(blob).digest())

    path = Path(path)
    _atomic_write_bytes(path, bytes(blob))
    return path


def read_checkpoint(path: str | Path) -> tuple[GlowNet, dict]:
    """Reconstruct the network and return it with the checkpoint header."""
    blob = Path(path).read_bytes()
    base = len(CHECKPOINT_MAGIC) + 4 + 8
    if len(blob) < base + 32:
        raise ModelError(f"checkpoint too short to be valid: {path}")
    if blob[:5] != CHECKPOINT_MAGIC:
        raise ModelError(f"not a model checkpoint (bad magic): {path}")
    (version,) = struct.unpack("<I", blob[5:9])
    if version != CHECKPOINT_VERSION:
        raise ModelError(f"unsupported checkpoint version {version}")
    (header_len,) = struct.unpack("<Q", blob[9:17])
    header_end = 17 + header_len
    if len(blob) < header_end + 32:
        raise ModelError(f"checkpoint header truncated: {path}")
    header = json.loads(blob[17:header_end].decode())

    expected = 0
    for rec in header["weights"]:
        expected += int(np.prod(rec["shape"], dtype=np.int64) or 1) * np.dtype(rec["dtype"]).itemsize
    if len(blob) != header_end + expected + 32:
        if len(blob) == header_end + 32:
            raise ModelError(f"checkpoint has a header but no weights: {path}")
        raise ModelError(f"checkpoint truncated or padded: {path}")
    digest = blob[-32:]
    if hashlib.sha256(blob[:-32]).digest() != digest:
        raise ModelError(f"checkpoint checksum mismatch: {path}")

    config = GlowConfig.from_dict(header["glow_config"])
    net = GlowNet(config, seed=0)
    state = {}
    pos = header_end
    for rec in header["weights"]:
        n = int(np.prod(rec["shape"], dtype=np.int64) or 1)
        width = np.dtype(rec["dtype"]).itemsize
        arr = np.frombuffer(blob, dtype=_DTYPES[rec["dtype"]], count=n, offset=pos)
        state[rec["name"]] = torch.from_numpy(
            arr.astype(rec["dtype"]).reshape(rec["shape"]).copy())
        pos += n * width
    missing = set(net.state_dict()) - set(state)
    if missing:
        raise ModelError(f"checkpoint is missing parameters: {sorted(missing)[:3]}")
    net.load_state_dict(state)
    return net, header


def load_checkpoint(path: str | Path) -> GlowModel:
    net, _ = read_checkpoint(path)
    return GlowModel(net)


def serialize_receipt(receipt: HideReceipt) -> str:
    doc = {
        "version": receipt.version,
        "mode": receipt.mode,
        "k": receipt.k,
        "fingerprint": receipt.fingerprint,
        "seed": receipt.seed,
        "temperature": receipt.temperature,
        "segments": [asdict(s) for s in receipt.segments],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def parse_receipt(text: str) -> HideReceipt:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"receipt is not valid JSON: {exc}") from exc
    try:
        segments = tuple(ReceiptSegment(**s) for s in doc["segments"])
        return HideReceipt(
            version=int(doc["version"]), mode=doc["mode"], k=int(doc["k"]),
            fingerprint=doc["fingerprint"], seed=doc["seed"],
            temperature=doc["temperature"], segments=segments)
    except (KeyError, TypeError) as exc:
        raise DataError(f"receipt is missing required fields: {exc}") from exc


def save_receipt(receipt: HideReceipt, path: str | Path) -> Path:
    path = Path(path)
    _atomic_write_bytes(path, (serialize_receipt(receipt) + "\n").encode())
    return path


def load_receipt(path: str | Path) -> HideReceipt:
    return parse_receipt(Path(path).read_text())
