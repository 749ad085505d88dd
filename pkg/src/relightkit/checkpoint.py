"""Versioned binary checkpoint container.

Layout: 4-byte magic, little-endian u32 format version, u64 header length,
UTF-8 JSON header, then the raw little-endian bytes of every tensor in the
order the header's manifest lists them. The header carries the model config,
optional training config, RNG state and step counter, so training can resume
exactly. Writes go through a temp file and an atomic rename.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import DataFormatError
from .model import ModelConfig, ModelParams

MAGIC = b"RKCP"
VERSION = 1

_SECTIONS = ("tensors", "running", "opt_m", "opt_v")


def save_checkpoint(path: str | os.PathLike, params: ModelParams,
                    train_config: dict | None = None, rng_state: dict | None = None,
                    step: int = 0) -> None:
    path = str(path)
    manifest = []
    blobs = []
    for section in _SECTIONS:
        store = getattr(params, section)
        for name in sorted(store):
            arr = np.ascontiguousarray(store[name])
            le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            manifest.append({"section": section, "name": name,
                             "dtype": str(arr.dtype), "shape": list(arr.shape)})
            blobs.append(le.tobytes())
    header = {
        "format": "relightkit-checkpoint",
        "model_config": params.config.to_dict(),
        "train_config": train_config,
        "rng_state": rng_state,
        "step": int(step),
        "opt_step": int(params.opt_step),
        "manifest": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", VERSION))
            f.write(struct.pack("<Q", len(header_bytes)))
            f.write(header_bytes)
            for blob in blobs:
                f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | os.PathLike):
    """Read a checkpoint; returns ``(ModelParams, header dict)``."""
    path = str(path)
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise DataFormatError(f"{path}: not a relightkit checkpoint (bad magic)")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
        (header_len,) = struct.unpack("<Q", f.read(8))
        try:
            header = json.loads(f.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"{path}: corrupt checkpoint header: {exc}") from exc
        stores = {section: {} for section in _SECTIONS}
        for item in header["manifest"]:
            dtype = np.dtype(item["dtype"])
            count = int(np.prod(item["shape"])) if item["shape"] else 1
            raw = f.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise DataFormatError(f"{path}: truncated tensor {item['name']}")
            arr = np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype)
            stores[item["section"]][item["name"]] = arr.reshape(item["shape"])
    params = ModelParams(config=ModelConfig.from_dict(header["model_config"]),
                         tensors=stores["tensors"], running=stores["running"],
                         opt_m=stores["opt_m"], opt_v=stores["opt_v"],
                         opt_step=int(header.get("opt_step", 0)))
    return params, header
