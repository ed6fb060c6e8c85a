"""Versioned binary checkpoint container shared by both trainable models.

Layout: magic, version, length-prefixed JSON descriptor (architecture +
array manifest), then the parameter arrays as little-endian float32 in
manifest order.  Loading validates the stored architecture against the
model the caller constructed.
"""

from __future__ import annotations

import json
import struct

import numpy as np
import torch

_MAGIC = b"NSCKPT"
_VERSION = 1


def save_checkpoint(model: torch.nn.Module, arch: dict, path: str) -> None:
    state = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    manifest = [{"name": k, "shape": list(v.shape)} for k, v in state.items()]
    descriptor = json.dumps({"arch": arch, "arrays": manifest}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<H", _VERSION))
        fh.write(struct.pack("<I", len(descriptor)))
        fh.write(descriptor)
        for entry in manifest:
            fh.write(state[entry["name"]].astype("<f4").tobytes(order="C"))


def load_checkpoint(model: torch.nn.Module, arch: dict, path: str) -> None:
    with open(path, "rb") as fh:
        if fh.read(6) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint container")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (desc_len,) = struct.unpack("<I", fh.read(4))
        descriptor = json.loads(fh.read(desc_len).decode("utf-8"))
        if descriptor["arch"] != arch:
            raise ValueError(
                f"{path}: architecture mismatch\n stored: {descriptor['arch']}\n expected: {arch}"
            )
        state = {}
        for entry in descriptor["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
            state[entry["name"]] = torch.as_tensor(data.copy())
    target_dtype = next(model.parameters()).dtype
    model.load_state_dict({k: v.to(target_dtype) for k, v in state.items()})
