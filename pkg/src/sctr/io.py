"""Tensor files, PNG ingestion, label maps.

Tensor file layout (``.sctr``)::

    uint32 little-endian   header length N
    N bytes                UTF-8 JSON header
                           {"magic": "SCTR1", "dtype": "f32", "shape": [I1, I2, I3],
                            "peak": 1.0, "bands": [...optional...], ...}
    4 * I1 * I2 * I3 bytes little-endian float32 payload, C order (axis 3 fastest)

Other array formats enter through :func:`convert_npy`; anything numpy can
load can be saved with ``np.save`` first.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError

MAGIC = "SCTR1"
_LEN = struct.Struct("<I")


def save_tensor(path, tensor, peak: float = 1.0, bands=None, **extra) -> Path:
    path = Path(path)
    arr = np.asarray(tensor)
    if arr.ndim != 3:
        raise ValueError(f"tensor files hold 3rd-order tensors, got shape {arr.shape}")
    header = {"magic": MAGIC, "dtype": "f32", "shape": [int(s) for s in arr.shape], "peak": float(peak)}
    if bands is not None:
        header["bands"] = list(bands)
    header.update(extra)
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_LEN.pack(len(hbytes)) + hbytes + payload)
    return path


def read_tensor(path) -> tuple[np.ndarray, dict]:
    """Load a tensor file, returning ``(float32 array, header)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _LEN.size:
        raise FormatError("file too short for header length", offset=len(raw))
    (n,) = _LEN.unpack_from(raw, 0)
    start = _LEN.size
    if start + n > len(raw):
        raise FormatError(f"header of {n} bytes truncated", offset=len(raw))
    try:
        header = json.loads(raw[start:start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt header: {exc}", offset=start) from None
    if not isinstance(header, dict) or header.get("magic") != MAGIC:
        raise FormatError("bad magic", offset=start)
    if header.get("dtype") != "f32":
        raise FormatError(f"unsupported dtype {header.get('dtype')!r}", offset=start)
    shape = header.get("shape")
    if not (isinstance(shape, list) and len(shape) == 3 and all(isinstance(s, int) and s > 0 for s in shape)):
        raise FormatError(f"invalid shape {shape!r}", offset=start)
    body = start + n
    expected = 4 * shape[0] * shape[1] * shape[2]
    if len(raw) - body != expected:
        raise FormatError(f"payload is {len(raw) - body} bytes, expected {expected}",
                          offset=min(len(raw), body + expected))
    arr = np.frombuffer(raw, dtype="<f4", count=expected // 4, offset=body).reshape(shape)
    return arr.astype(np.float32), header


def load_tensor(path) -> np.ndarray:
    return read_tensor(path)[0]


def load_image(path, kind: str | None = None) -> tuple[np.ndarray, float, dict]:
    """Load ``png8`` or ``tensor_file`` data as ``(tensor, peak, metadata)``.

    PNG values are scaled to [0, 1] (peak 1.0); grayscale images get a
    single band. ``kind`` is inferred from the suffix when omitted.
    """
    path = Path(path)
    if kind is None:
        kind = "png8" if path.suffix.lower() == ".png" else "tensor_file"
    if kind == "tensor_file":
        arr, header = read_tensor(path)
        return arr, float(header.get("peak", 1.0)), header
    if kind != "png8":
        raise ValueError(f"unknown image kind {kind!r}")
    try:
        img = Image.open(path)
        img.load()
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"unreadable PNG: {exc}", offset=0) from None
    if img.mode in ("P", "RGBA", "LA"):
        img = img.convert("RGB" if img.mode != "LA" else "L")
    if img.mode not in ("L", "RGB"):
        raise FormatError(f"only 8-bit grayscale/RGB PNGs are supported, got mode {img.mode}", offset=0)
    arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr, 1.0, {"bit_depth": 8, "mode": img.mode, "source": str(path)}


def save_png8(path, tensor) -> Path:
    """Write a [0, 1] tensor with 1 or 3 bands as an 8-bit PNG."""
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    u8 = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    path = Path(path)
    Image.fromarray(u8).save(path)
    return path


def convert_npy(src, dst, peak: float = 1.0) -> Path:
    """Import a ``.npy`` array (2D arrays gain a singleton band axis)."""
    arr = np.load(src)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return save_tensor(dst, arr, peak=peak, source=str(src))


# ------------------------------------------------------------------ labels


def save_labels(path, labels, **meta) -> Path:
    """16-bit PNG label map plus a JSON sidecar next to it."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 65535:
        raise ValueError("labels must fit in 16 bits")
    path = Path(path)
    Image.fromarray(labels.astype(np.uint16)).save(path)
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps({"labels": int(labels.max()) + 1, **meta}, indent=2, sort_keys=True))
    return path


def load_labels(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    labels = np.asarray(Image.open(path)).astype(np.int64)
    sidecar = path.with_suffix(".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return labels, meta


def boundary_mask(labels) -> np.ndarray:
    labels = np.asarray(labels)
    b = np.zeros(labels.shape, dtype=bool)
    b[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    b[1:, :] |= labels[1:, :] != labels[:-1, :]
    return b


def save_boundaries_png(path, image, labels) -> Path:
    """Overlay superpixel boundaries in red on a [0, 1] image."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    elif img.shape[2] != 3:
        img = np.repeat(img.mean(axis=2, keepdims=True), 3, axis=2)
    img = img.copy()
    img[boundary_mask(labels)] = (1.0, 0.0, 0.0)
    return save_png8(path, img)
