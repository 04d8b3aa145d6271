"""8-bit PNG rendering of alert layers with fixed, documented color ramps."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import NotFoundError
from ..raster import load_scene, read_band_stack

LAYER_NAMES = ("rgb", "rgb_ref", "mbmp", "delta_ch4", "probability")

# anchor-interpolated ramps: positions in [0,1] -> RGB
_RAMPS = {
    "mbmp": {
        "domain": [0.90, 1.02],
        "anchors": [
            (0.0, (127, 0, 255)),
            (0.4, (255, 64, 0)),
            (0.75, (255, 200, 80)),
            (0.9, (235, 235, 235)),
            (1.0, (255, 255, 255)),
        ],
        "description": "band ratio; purple/red = strong absorption, white = none",
    },
    "delta_ch4": {
        "domain": [0.0, 2.0],
        "anchors": [
            (0.0, (255, 255, 255)),
            (0.25, (255, 220, 90)),
            (0.55, (255, 120, 30)),
            (0.8, (200, 30, 30)),
            (1.0, (90, 0, 120)),
        ],
        "description": "methane column enhancement, mol/m^2",
    },
    "probability": {
        "domain": [0.0, 1.0],
        "anchors": [
            (0.0, (20, 20, 40)),
            (0.35, (40, 90, 160)),
            (0.6, (60, 180, 170)),
            (0.85, (230, 220, 60)),
            (1.0, (255, 255, 210)),
        ],
        "description": "plume probability",
    },
}

RGB_REFLECTANCE_MAX = 0.45


def safe_layer_name(detection_id: str) -> str:
    """Filesystem-safe stem for a detection's stored layer stack."""
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in detection_id)


def layer_manifest() -> dict:
    """Ramp documentation served to clients for legends."""
    ramps = {}
    for name, ramp in _RAMPS.items():
        ramps[name] = {
            "domain": ramp["domain"],
            "anchors": [{"position": p, "rgb": list(c)} for p, c in ramp["anchors"]],
            "description": ramp["description"],
        }
    ramps["rgb"] = ramps["rgb_ref"] = {
        "domain": [0.0, RGB_REFLECTANCE_MAX],
        "anchors": [],
        "description": "true color, linear reflectance stretch",
    }
    return {"layers": list(LAYER_NAMES), "ramps": ramps, "encoding": "png-8bit"}


def _apply_ramp(values: np.ndarray, ramp: dict) -> np.ndarray:
    lo, hi = ramp["domain"]
    t = np.clip((values - lo) / (hi - lo), 0.0, 1.0)
    positions = np.array([p for p, _ in ramp["anchors"]])
    colors = np.array([c for _, c in ramp["anchors"]], dtype=np.float64)
    out = np.empty(values.shape + (3,), dtype=np.uint8)
    for ch in range(3):
        out[..., ch] = np.interp(t, positions, colors[:, ch]).astype(np.uint8)
    return out


def _to_png(rgb: np.ndarray) -> bytes:
    img = Image.fromarray(rgb, mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def render_layer(store_root, scenes_dir, record, name: str) -> bytes:
    """Render one named layer of a detection to PNG bytes."""
    if name not in LAYER_NAMES:
        raise NotFoundError(f"unknown layer {name!r}")
    store_root = Path(store_root)
    if name in ("rgb", "rgb_ref"):
        stem = record.scene_ref if name == "rgb" else record.reference_ref
        if stem is None:
            raise NotFoundError(f"no reference scene for {record.detection_id}")
        scene = load_scene(Path(scenes_dir) / f"{stem}.msl")
        rgb = np.stack([scene.band("red"), scene.band("green"), scene.band("blue")], axis=-1)
        scaled = np.clip(rgb / RGB_REFLECTANCE_MAX, 0.0, 1.0)
        return _to_png((scaled * 255).astype(np.uint8))

    layer_path = store_root / "layers" / f"{safe_layer_name(record.detection_id)}.msl"
    if not layer_path.exists():
        raise NotFoundError(f"no stored layers for {record.detection_id}")
    planes, _ = read_band_stack(layer_path)
    plane_key = {"mbmp": "ratio", "delta_ch4": "delta_ch4", "probability": "probability"}[name]
    if plane_key not in planes:
        raise NotFoundError(f"layer {name!r} not stored for {record.detection_id}")
    values = np.nan_to_num(planes[plane_key].astype(np.float64), nan=_RAMPS[name]["domain"][1])
    return _to_png(_apply_ramp(values, _RAMPS[name]))
