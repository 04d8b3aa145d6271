"""Scene data model, band-stack file format, resampling and validity filtering.

A scene is a single satellite acquisition over a monitored site: six
top-of-atmosphere reflectance bands on a common 10 m grid, a per-pixel cloud
mask and the metadata needed downstream (wind, viewing geometry, timestamps).

On-disk format ("band stack"): a small self-describing binary container
holding named 2-D planes, plus a JSON metadata sidecar next to it. The format
is little-endian throughout:

    magic "MS2L" | u16 version=1 | u32 width | u32 height | u8 plane_count
    per plane: u8 name_len | name UTF-8 | u8 dtype (0=f32, 1=u8)
    planes, row-major, in declared order

Round trips are bit-exact, which the test suite relies on.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import FormatError, IntegrityError
from .validation import check_plane, check_same_shape

MAGIC = b"MS2L"
FORMAT_VERSION = 1
GRID_RESOLUTION_M = 10.0
PIXEL_AREA_M2 = GRID_RESOLUTION_M * GRID_RESOLUTION_M

BAND_NAMES = ("blue", "green", "red", "nir", "swir1", "swir2")
SENSORS = ("S2", "Landsat")

# cloud mask codes (one byte per pixel)
CLEAR, CLOUD, SHADOW, MISSING = 0, 1, 2, 3

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("u1")}
_DTYPE_TO_CODE = {np.dtype("<f4"): 0, np.dtype("u1"): 1}

MAX_WIND_SPEED = 60.0  # m/s, sanity ceiling for scene metadata


@dataclass(frozen=True)
class SceneImage:
    """One acquisition: 6 reflectance planes + cloud mask + metadata.

    Bands are ordered ``(blue, green, red, nir, swir1, swir2)`` in a single
    (6, H, W) float32 array. Reflectance is dimensionless top-of-atmosphere,
    non-negative (negatives are clamped at load). Treat all arrays as
    immutable once constructed.
    """

    site_id: str
    acquisition_time: datetime
    sensor: str
    bands: np.ndarray  # (6, H, W) float32
    cloud_mask: np.ndarray  # (H, W) uint8
    wind_u: float
    wind_v: float
    solar_zenith: float
    viewing_zenith: float

    def __post_init__(self):
        if self.sensor not in SENSORS:
            raise IntegrityError(f"unknown sensor {self.sensor!r}")
        if self.bands.ndim != 3 or self.bands.shape[0] != len(BAND_NAMES):
            raise IntegrityError(f"bands must be (6, H, W), got {self.bands.shape}")
        if self.cloud_mask.shape != self.bands.shape[1:]:
            raise IntegrityError(
                f"cloud mask shape {self.cloud_mask.shape} != band shape {self.bands.shape[1:]}"
            )
        if not np.all(np.isfinite(self.bands)):
            raise IntegrityError("band reflectance contains non-finite values")
        speed = float(np.hypot(self.wind_u, self.wind_v))
        if not np.isfinite(speed) or speed >= MAX_WIND_SPEED:
            raise IntegrityError(f"wind speed {speed:.1f} m/s out of range")

    @property
    def width(self) -> int:
        return self.bands.shape[2]

    @property
    def height(self) -> int:
        return self.bands.shape[1]

    @property
    def wind_speed(self) -> float:
        return float(np.hypot(self.wind_u, self.wind_v))

    @property
    def wind_direction_deg(self) -> float:
        """Direction the wind blows toward, degrees counterclockwise from +x (east)."""
        return float(np.degrees(np.arctan2(self.wind_v, self.wind_u)))

    def band(self, name: str) -> np.ndarray:
        return self.bands[BAND_NAMES.index(name)]

    def with_bands(self, bands: np.ndarray) -> "SceneImage":
        return replace(self, bands=bands)


@dataclass(frozen=True)
class PlumeLabel:
    """Ground-truth plume annotation for one scene.

    ``delta_ch4`` is the per-pixel methane column enhancement in mol/m^2,
    zero outside the binary mask.
    """

    mask: np.ndarray  # (H, W) bool
    delta_ch4: np.ndarray  # (H, W) float32, >= 0
    flux_t_per_h: float | None = None

    def __post_init__(self):
        check_same_shape(self.mask, self.delta_ch4, names=["mask", "delta_ch4"])
        if np.any(self.delta_ch4 < 0):
            raise IntegrityError("delta_ch4 must be non-negative")
        if np.any((self.delta_ch4 > 0) & ~self.mask.astype(bool)):
            raise IntegrityError("delta_ch4 > 0 outside the plume mask")

    @property
    def n_pixels(self) -> int:
        return int(self.mask.sum())

    @property
    def is_positive(self) -> bool:
        return self.n_pixels > 0

    @staticmethod
    def empty(shape) -> "PlumeLabel":
        return PlumeLabel(
            mask=np.zeros(shape, dtype=bool),
            delta_ch4=np.zeros(shape, dtype=np.float32),
        )


# ---------------------------------------------------------------------------
# band-stack container


def write_band_stack(path, planes: dict[str, np.ndarray], metadata: dict | None = None):
    """Write named planes to ``path``; metadata goes to ``<stem>.json``."""
    path = Path(path)
    items = list(planes.items())
    if not items:
        raise ValueError("no planes to write")
    h, w = next(iter(planes.values())).shape
    check_same_shape(*planes.values(), names=list(planes))

    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<HIIB", FORMAT_VERSION, w, h, len(items))
    blobs = []
    for name, plane in items:
        plane = np.ascontiguousarray(plane)
        if plane.dtype == np.uint8:
            code = 1
        else:
            plane = plane.astype("<f4", copy=False)
            code = 0
        raw = name.encode("utf-8")
        if len(raw) > 255:
            raise ValueError(f"plane name too long: {name!r}")
        buf += struct.pack("<B", len(raw)) + raw + struct.pack("<B", code)
        blobs.append(plane.tobytes())
    with open(path, "wb") as fh:
        fh.write(bytes(buf))
        for blob in blobs:
            fh.write(blob)
    if metadata is not None:
        sidecar_path(path).write_text(json.dumps(metadata, indent=2, sort_keys=True))


def read_band_stack(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a band-stack file; returns (planes, metadata)."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    version, w, h, n_planes = struct.unpack_from("<HIIB", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if w == 0 or h == 0:
        raise FormatError(f"{path}: empty raster {w}x{h}")
    offset = 4 + struct.calcsize("<HIIB")
    headers = []
    for _ in range(n_planes):
        (name_len,) = struct.unpack_from("<B", data, offset)
        offset += 1
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (code,) = struct.unpack_from("<B", data, offset)
        offset += 1
        if code not in _DTYPE_CODES:
            raise FormatError(f"{path}: unknown dtype code {code} for plane {name!r}")
        headers.append((name, _DTYPE_CODES[code]))

    planes = {}
    for name, dtype in headers:
        nbytes = w * h * dtype.itemsize
        if offset + nbytes > len(data):
            raise IntegrityError(f"{path}: truncated plane {name!r}")
        planes[name] = np.frombuffer(
            data, dtype=dtype, count=w * h, offset=offset
        ).reshape(h, w).copy()
        offset += nbytes
    if offset != len(data):
        raise IntegrityError(f"{path}: {len(data) - offset} trailing bytes")

    meta_path = sidecar_path(path)
    metadata = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return planes, metadata


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".json")


# ---------------------------------------------------------------------------
# scene save/load


def save_scene(scene: SceneImage, path) -> None:
    planes = {name: scene.bands[i] for i, name in enumerate(BAND_NAMES)}
    planes["cloud_mask"] = scene.cloud_mask.astype(np.uint8)
    metadata = {
        "site_id": scene.site_id,
        "acquisition_time": _format_time(scene.acquisition_time),
        "sensor": scene.sensor,
        "wind_u": scene.wind_u,
        "wind_v": scene.wind_v,
        "solar_zenith": scene.solar_zenith,
        "viewing_zenith": scene.viewing_zenith,
        "grid_resolution_m": GRID_RESOLUTION_M,
    }
    write_band_stack(path, planes, metadata)


def load_scene(path) -> SceneImage:
    """Load a scene, clamping negative reflectance to zero.

    Raises FormatError on a malformed container and IntegrityError when the
    planes do not form a valid scene (wrong set of planes, shape mismatch).
    """
    planes, metadata = read_band_stack(path)
    missing = [n for n in BAND_NAMES if n not in planes]
    if missing or "cloud_mask" not in planes:
        missing += [] if "cloud_mask" in planes else ["cloud_mask"]
        raise IntegrityError(f"{path}: missing planes {missing}")
    if not metadata:
        raise FormatError(f"{path}: metadata sidecar not found")
    bands = np.stack([planes[n] for n in BAND_NAMES]).astype(np.float32)
    np.maximum(bands, 0.0, out=bands)
    try:
        return SceneImage(
            site_id=metadata["site_id"],
            acquisition_time=_parse_time(metadata["acquisition_time"]),
            sensor=metadata["sensor"],
            bands=bands,
            cloud_mask=planes["cloud_mask"].astype(np.uint8),
            wind_u=float(metadata["wind_u"]),
            wind_v=float(metadata["wind_v"]),
            solar_zenith=float(metadata["solar_zenith"]),
            viewing_zenith=float(metadata["viewing_zenith"]),
        )
    except KeyError as exc:
        raise FormatError(f"{path}: metadata missing field {exc}") from exc


def _format_time(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _parse_time(text: str) -> datetime:
    return datetime.fromisoformat(text.replace("Z", "+00:00"))


# ---------------------------------------------------------------------------
# resampling

# Catmull-Rom cubic convolution kernel (a = -0.5). Reproduces constants and
# linear ramps exactly, which the retrieval ratios depend on.
_CR_A = -0.5


def _cubic_kernel(t: np.ndarray) -> np.ndarray:
    at = np.abs(t)
    at2 = at * at
    at3 = at2 * at
    a = _CR_A
    w = np.where(
        at <= 1.0,
        (a + 2.0) * at3 - (a + 3.0) * at2 + 1.0,
        np.where(at < 2.0, a * at3 - 5.0 * a * at2 + 8.0 * a * at - 4.0 * a, 0.0),
    )
    return w


def _resample_axis(plane: np.ndarray, factor: int) -> np.ndarray:
    """Bicubic upsample along axis 0 by an integer factor, edges replicated."""
    n = plane.shape[0]
    out_n = n * factor
    # centre-aligned mapping: output pixel i sits at (i + 0.5)/factor - 0.5
    x = (np.arange(out_n) + 0.5) / factor - 0.5
    x0 = np.floor(x).astype(int)
    frac = x - x0
    out = np.zeros((out_n,) + plane.shape[1:], dtype=np.float64)
    for tap in (-1, 0, 1, 2):
        idx = np.clip(x0 + tap, 0, n - 1)
        w = _cubic_kernel(frac - tap)
        out += w.reshape((-1,) + (1,) * (plane.ndim - 1)) * plane[idx]
    return out


def resample_to_10m(plane: np.ndarray, factor: int, clamp: bool = True) -> np.ndarray:
    """Upsample a 20 m or 30 m plane to the 10 m grid by bicubic interpolation.

    ``factor`` is 2 for 20 m inputs and 3 for 30 m inputs. The interpolation
    is separable Catmull-Rom with replicated edges; output is clamped to >= 0
    unless ``clamp`` is False (the linearity property is only exact before
    clamping).
    """
    plane = check_plane(plane)
    if factor not in (2, 3):
        raise ValueError(f"factor must be 2 or 3, got {factor}")
    if plane.shape[0] <= 0 or plane.shape[1] <= 0:
        raise ValueError("plane dimensions must be positive")
    out = _resample_axis(plane.astype(np.float64), factor)
    out = _resample_axis(out.T, factor).T
    if clamp:
        np.maximum(out, 0.0, out=out)
    return out


# ---------------------------------------------------------------------------
# validity filtering


def passes_clear_filter(scene: SceneImage, max_flagged_fraction: float = 0.5) -> bool:
    """True unless more than half the pixels are cloud, shadow or missing.

    The boundary is inclusive: exactly 50% flagged still passes.
    """
    flagged = np.count_nonzero(scene.cloud_mask != CLEAR)
    return flagged <= max_flagged_fraction * scene.cloud_mask.size


def clear_fraction(scene: SceneImage) -> float:
    return float(np.count_nonzero(scene.cloud_mask == CLEAR) / scene.cloud_mask.size)
