"""Model file: JSON manifest plus a raw little-endian f32 parameter block.

The manifest records the architecture, the loss weighting constant, the
input standardization statistics, and a named offset table into the binary
block (parameters first, then batch-norm running statistics). Serialization
is deterministic and round-trips bitwise for float32 models.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .unet import UNetConfig, bn_state_names, param_names

MODEL_FORMAT_VERSION = 1


def save_model(path, params, state, config: UNetConfig, *, alpha: float,
               channel_stats: dict | None = None, seed: int | None = None,
               tag: str = "", extra: dict | None = None) -> None:
    path = Path(path)
    order = param_names(config) + bn_state_names(config)
    tensors = []
    offset = 0
    blobs = []
    store = {**params, **state}
    for name in order:
        arr = np.ascontiguousarray(store[name], dtype="<f4")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.nbytes
        blobs.append(arr.tobytes())
    manifest = {
        "format_version": MODEL_FORMAT_VERSION,
        "architecture": {
            "in_channels": config.in_channels,
            "base_width": config.base_width,
            "depth": config.depth,
            "bn_eps": config.bn_eps,
            "bn_momentum": config.bn_momentum,
        },
        "alpha": alpha,
        "channel_stats": channel_stats,
        "seed": seed,
        "tag": tag,
        "dtype": "f32",
        "data_file": path.stem + ".bin",
        "tensors": tensors,
    }
    if extra:
        manifest["extra"] = extra
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (path.parent / manifest["data_file"]).write_bytes(b"".join(blobs))


def load_model(path):
    """Returns (params, state, config, manifest)."""
    path = Path(path)
    manifest = json.loads(path.read_text())
    if manifest.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {manifest.get('format_version')}")
    arch = manifest["architecture"]
    config = UNetConfig(
        in_channels=arch["in_channels"],
        base_width=arch["base_width"],
        depth=arch["depth"],
        bn_eps=arch["bn_eps"],
        bn_momentum=arch["bn_momentum"],
    )
    raw = (path.parent / manifest["data_file"]).read_bytes()
    store = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        store[entry["name"]] = np.frombuffer(
            raw, dtype="<f4", count=count, offset=entry["offset"]
        ).reshape(shape).copy()
    p_names = set(param_names(config))
    params = {k: v for k, v in store.items() if k in p_names}
    state = {k: v for k, v in store.items() if k not in p_names}
    return params, state, config, manifest
