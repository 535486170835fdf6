"""Adam with decoupled weight decay, cosine annealing, and checkpoints."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Parameter
from .errors import FormatError, NumericalError


@dataclass
class ScheduleState:
    step: int
    lr_base: float
    lr_min: float
    total_steps: int


def cosine_lr(state: ScheduleState) -> float:
    if state.total_steps <= 0 or state.step >= state.total_steps:
        return state.lr_min
    frac = max(state.step, 0) / state.total_steps
    return state.lr_min + 0.5 * (state.lr_base - state.lr_min) * (1.0 + math.cos(math.pi * frac))


class Adam:
    """Adam with bias correction; weight decay is applied to the value
    (``p <- p * (1 - lr * weight_decay)``) before the moment update."""

    def __init__(self, params, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0):
        self.params: list[Parameter] = list(params)
        self.betas = tuple(betas)
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        b1, b2 = self.betas
        self.t += 1
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if self.weight_decay:
                p.value *= 1.0 - lr * self.weight_decay
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if not np.all(np.isfinite(p.value)):
                raise NumericalError(f"non-finite value in parameter {p.name} after step {self.t}",
                                     iteration=self.t, node=p.name)

    def state_dict(self) -> dict:
        return {"t": self.t, "betas": list(self.betas), "eps": self.eps,
                "weight_decay": self.weight_decay}


def adam_step(params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0,
              optimizer: Adam | None = None) -> Adam:
    """One Adam update; pass the returned optimizer back in to keep moment state."""
    if optimizer is None:
        optimizer = Adam(params, betas, eps, weight_decay)
    optimizer.step(lr)
    return optimizer


# ----------------------------------------------------------------- checkpoint

_CKPT_MANIFEST = "manifest.json"
_CKPT_ARRAYS = "arrays.bin"


def save_checkpoint(directory, params, optimizer: Adam | None = None, extra: dict | None = None) -> Path:
    """Write ``manifest.json`` plus little-endian float arrays to ``arrays.bin``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries, offset = [], 0
    blobs = []

    def put(arr):
        nonlocal offset
        a = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
        blobs.append(a.tobytes())
        start = offset
        offset += a.nbytes
        return {"offset": start, "nbytes": a.nbytes, "shape": list(a.shape), "dtype": a.dtype.str}

    for i, p in enumerate(params):
        entry = {"name": p.name, "value": put(p.value)}
        if optimizer is not None:
            entry["adam_m"] = put(optimizer.m[i])
            entry["adam_v"] = put(optimizer.v[i])
        entries.append(entry)
    manifest = {
        "format": "sctr-checkpoint-1",
        "params": entries,
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "extra": extra or {},
    }
    (directory / _CKPT_ARRAYS).write_bytes(b"".join(blobs))
    (directory / _CKPT_MANIFEST).write_text(json.dumps(manifest, indent=2))
    return directory


def load_checkpoint(directory) -> dict:
    """Read a checkpoint back as ``{"params": {name: array}, "adam": {...}, ...}``."""
    directory = Path(directory)
    manifest = json.loads((directory / _CKPT_MANIFEST).read_text())
    raw = (directory / _CKPT_ARRAYS).read_bytes()

    def get(spec):
        end = spec["offset"] + spec["nbytes"]
        if end > len(raw):
            raise FormatError("checkpoint array past end of file", offset=len(raw))
        a = np.frombuffer(raw[spec["offset"]:end], dtype=np.dtype(spec["dtype"]))
        return a.reshape(spec["shape"]).copy()

    params, moments = {}, {}
    for e in manifest["params"]:
        params[e["name"]] = get(e["value"])
        if "adam_m" in e:
            moments[e["name"]] = (get(e["adam_m"]), get(e["adam_v"]))
    return {"params": params, "adam": moments, "optimizer": manifest["optimizer"],
            "extra": manifest["extra"]}
