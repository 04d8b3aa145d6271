"""Methane transmittance retrievals from SWIR band ratios.

Two products:

* single-pass ratio ("MBSP") — scaled SWIR2/SWIR1 of one acquisition, used
  offshore where stable land references do not exist;
* multi-pass ratio ("MBMP") — the single-pass ratio of a target acquisition
  divided by that of a plume-free reference pass, which cancels surface
  structure that is common to both SWIR bands.

Both are near 1 over plume-free ground and drop below 1 inside a plume,
approximating the methane transmittance ratio tau_swir2/tau_swir1.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import ExtrapolationError, InsufficientDataError, NoReferenceError
from .raster import CLEAR, SceneImage, passes_clear_filter, read_band_stack, write_band_stack
from .spectra import (
    BandTransmittanceModel,
    SpectralContext,
    TransmittanceLUT,
    air_mass_factor,
    default_spectral_context,
)
from .validation import check_same_shape

EPS_RADIANCE = 1e-4  # reflectance floor below which the ratio is masked
MIN_REGRESSION_PIXELS = 100
REFERENCE_WINDOW_DAYS = 122  # "last 4 months"
REFERENCE_BANDS = ("blue", "green", "red", "swir1")


@dataclass(frozen=True)
class RetrievalProduct:
    """Per-pixel transmittance-like ratio, optionally inverted to a column map.

    ``ratio`` is NaN wherever either input was invalid; ``delta_ch4`` (mol/m^2,
    >= 0) is attached by :func:`invert_to_concentration`.
    """

    ratio: np.ndarray
    method: str  # "MBMP" | "MBSP"
    reference_time: datetime | None = None
    delta_ch4: np.ndarray | None = None

    def __post_init__(self):
        if self.method not in ("MBMP", "MBSP"):
            raise ValueError(f"unknown retrieval method {self.method!r}")
        if self.delta_ch4 is not None:
            check_same_shape(self.ratio, self.delta_ch4, names=["ratio", "delta_ch4"])

    @property
    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.ratio)

    def with_delta(self, delta_ch4: np.ndarray) -> "RetrievalProduct":
        return RetrievalProduct(self.ratio, self.method, self.reference_time, delta_ch4)


def mbsp(scene: SceneImage) -> RetrievalProduct:
    """Single-pass ratio c * swir2 / swir1 with a scene-wide scaling.

    ``c`` is the least-squares coefficient regressing swir1 onto swir2 over
    clear pixels, which brings the clear-pixel ratio close to 1. Pixels with
    swir1 below the reflectance floor are masked NaN.
    """
    swir1 = scene.band("swir1").astype(np.float64)
    swir2 = scene.band("swir2").astype(np.float64)
    usable = (scene.cloud_mask == CLEAR) & (swir1 >= EPS_RADIANCE) & (swir2 >= 0)
    if np.count_nonzero(usable) < MIN_REGRESSION_PIXELS:
        raise InsufficientDataError(
            f"{np.count_nonzero(usable)} usable clear pixels for the scaling "
            f"regression (need {MIN_REGRESSION_PIXELS})"
        )
    s1, s2 = swir1[usable], swir2[usable]
    denom = float(np.dot(s2, s2))
    if denom <= 0:
        raise InsufficientDataError("swir2 is zero over all usable pixels")
    c = float(np.dot(s1, s2)) / denom
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = c * swir2 / swir1
    ratio[swir1 < EPS_RADIANCE] = np.nan
    return RetrievalProduct(ratio=ratio, method="MBSP")


def mbmp(scene: SceneImage, reference: SceneImage) -> RetrievalProduct:
    """Multi-pass ratio: single-pass ratio of scene over that of the reference."""
    if scene.bands.shape != reference.bands.shape:
        raise ValueError(
            f"scene shape {scene.bands.shape[1:]} != reference {reference.bands.shape[1:]}"
        )
    target = mbsp(scene)
    ref = mbsp(reference)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = target.ratio / ref.ratio
    ratio[~(target.valid_mask & ref.valid_mask)] = np.nan
    return RetrievalProduct(
        ratio=ratio, method="MBMP", reference_time=reference.acquisition_time
    )


def select_reference(
    target: SceneImage,
    candidates: list[SceneImage],
    window_days: int = REFERENCE_WINDOW_DAYS,
) -> SceneImage:
    """Pick the most similar clear acquisition from the recent past.

    Eligible candidates pass the clear filter and were acquired within
    ``window_days`` before the target. Similarity is the mean absolute
    reflectance difference over (blue, green, red, swir1) on mutually clear
    pixels; ties go to the most recent acquisition.
    """
    window = timedelta(days=window_days)
    scored = []
    for cand in candidates:
        if cand.bands.shape != target.bands.shape:
            continue
        if not (target.acquisition_time - window <= cand.acquisition_time < target.acquisition_time):
            continue
        if not passes_clear_filter(cand):
            continue
        both_clear = (target.cloud_mask == CLEAR) & (cand.cloud_mask == CLEAR)
        if not both_clear.any():
            continue
        diffs = [
            np.abs(target.band(b)[both_clear] - cand.band(b)[both_clear]).mean()
            for b in REFERENCE_BANDS
        ]
        scored.append((float(np.mean(diffs)), -cand.acquisition_time.timestamp(), cand))
    if not scored:
        raise NoReferenceError(
            f"no eligible reference for {target.site_id} at {target.acquisition_time}"
        )
    scored.sort(key=lambda item: item[:2])
    return scored[0][2]


class RatioInverter:
    """Monotone inverse of the band-ratio transmittance curve at one geometry.

    The forward curve g(column) = tau_swir2/tau_swir1 is sampled densely via
    the LUT band models and inverted by interpolation; ratios above 1 map to
    a zero column, ratios below the curve minimum clamp to the LUT maximum.
    """

    def __init__(
        self,
        lut: TransmittanceLUT,
        ctx: SpectralContext | None = None,
        sensor: str = "S2",
        n_samples: int = 512,
    ):
        ctx = ctx or default_spectral_context(lut.wavelength_nm)
        self._m1 = BandTransmittanceModel(lut, ctx, sensor, "swir1")
        self._m2 = BandTransmittanceModel(lut, ctx, sensor, "swir2")
        self._columns = np.linspace(0.0, lut.max_column, n_samples)
        self._lut = lut

    def invert(self, ratio: np.ndarray, amf: float) -> np.ndarray:
        if not self._lut.covers_amf(amf):
            raise ExtrapolationError(f"amf {amf:.3f} outside LUT grid")
        curve = self._m2.tau(self._columns, amf) / self._m1.tau(self._columns, amf)
        # curve decreases from 1; np.interp needs ascending x
        order = np.argsort(curve)
        curve_sorted = curve[order]
        col_sorted = self._columns[order]
        ratio = np.asarray(ratio, dtype=np.float64)
        flat = ratio.ravel()
        out = np.full(flat.shape, np.nan)
        finite = np.isfinite(flat)
        out[finite] = np.interp(
            flat[finite], curve_sorted, col_sorted,
            left=self._lut.max_column, right=0.0,
        )
        out[finite & (flat >= 1.0)] = 0.0
        out[finite] = np.maximum(out[finite], 0.0)
        return out.reshape(ratio.shape)


_INVERTER_CACHE: dict[tuple[int, int, str], RatioInverter] = {}


def invert_to_concentration(
    product: RetrievalProduct,
    lut: TransmittanceLUT,
    solar_zenith_deg: float,
    viewing_zenith_deg: float,
    ctx: SpectralContext | None = None,
    sensor: str = "S2",
) -> RetrievalProduct:
    """Invert the ratio map to column enhancement (mol/m^2), clamped >= 0."""
    key = (id(lut), id(ctx), sensor)
    inverter = _INVERTER_CACHE.get(key)
    if inverter is None:
        inverter = _INVERTER_CACHE[key] = RatioInverter(lut, ctx, sensor)
    amf = air_mass_factor(solar_zenith_deg, viewing_zenith_deg)
    delta = inverter.invert(product.ratio, amf)
    return product.with_delta(delta)


# ---------------------------------------------------------------------------
# persistence


def save_retrieval(product: RetrievalProduct, path) -> None:
    planes = {"ratio": np.asarray(product.ratio, dtype=np.float32)}
    if product.delta_ch4 is not None:
        planes["delta_ch4"] = np.asarray(product.delta_ch4, dtype=np.float32)
    metadata = {
        "method": product.method,
        "reference_time": product.reference_time.isoformat()
        if product.reference_time
        else None,
    }
    write_band_stack(path, planes, metadata)


def load_retrieval(path) -> RetrievalProduct:
    planes, metadata = read_band_stack(Path(path))
    ref_time = metadata.get("reference_time")
    return RetrievalProduct(
        ratio=planes["ratio"].astype(np.float64),
        method=metadata["method"],
        reference_time=datetime.fromisoformat(ref_time) if ref_time else None,
        delta_ch4=planes.get("delta_ch4"),
    )
