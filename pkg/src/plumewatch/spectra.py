"""Methane transmittance look-up tables and band-level spectral integration.

The forward simulation needs the atmospheric transmittance of a methane
column enhancement at fine spectral resolution. Operationally that table
comes from a full radiative-transfer code; here it is generated by a
parametric Beer-Lambert model with two absorption features near 1660 nm and
2300 nm, tabulated on a (column enhancement, air-mass factor, wavelength)
grid with exactly the same file interface, so a real radiative-transfer
table can be dropped in unchanged.

Band transmittance for a sensor band follows

    tau_band = integral(E_g * T_atm * T_dch4 * srf) / integral(E_g * T_atm * srf)

where T_dch4(lambda) is obtained by bicubic-spline interpolation of the LUT
in (column, air-mass factor). Because spectral integration is linear in the
table values, interpolating pre-integrated band values is identical to
integrating the interpolated spectrum; we exploit that and cache the band
integrals on the LUT grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import ExtrapolationError, IntegrityError

BACKGROUND_CH4_PPB = 1800.0  # assumed constant background concentration

# 1 mol/m^2 of column enhancement expressed as a ppb * metre mixing-ratio path
# (surface air number density 2.687e25 m^-3).
PPB_M_PER_MOL_M2 = 6.02214076e23 / (2.687e25 * 1e-9)


def air_mass_factor(solar_zenith_deg: float, viewing_zenith_deg: float) -> float:
    """Two-way geometric air-mass factor, 1/cos(sza) + 1/cos(vza)."""
    sza = np.radians(solar_zenith_deg)
    vza = np.radians(viewing_zenith_deg)
    return float(1.0 / np.cos(sza) + 1.0 / np.cos(vza))


# ---------------------------------------------------------------------------
# parametric absorption model (stand-in for a radiative-transfer code)


@dataclass(frozen=True)
class AbsorptionModel:
    """Methane absorption cross-section sigma(lambda) in m^2/mol.

    Two Gaussian features: a weak band near 1660 nm (SWIR1) and a stronger
    band near 2300 nm (SWIR2), plus a small broadband floor.
    """

    center1_nm: float = 1666.0
    width1_nm: float = 60.0
    amplitude1: float = 0.055
    center2_nm: float = 2300.0
    width2_nm: float = 95.0
    amplitude2: float = 0.42
    floor: float = 0.002

    def cross_section(self, wavelength_nm: np.ndarray) -> np.ndarray:
        lam = np.asarray(wavelength_nm, dtype=np.float64)
        g1 = self.amplitude1 * np.exp(-0.5 * ((lam - self.center1_nm) / self.width1_nm) ** 2)
        g2 = self.amplitude2 * np.exp(-0.5 * ((lam - self.center2_nm) / self.width2_nm) ** 2)
        return g1 + g2 + self.floor

    def transmittance(self, wavelength_nm, delta_ch4, amf) -> np.ndarray:
        """Beer-Lambert transmittance exp(-sigma * dCH4 * amf), broadcasting."""
        sigma = self.cross_section(wavelength_nm)
        return np.exp(-sigma * np.asarray(delta_ch4, dtype=np.float64) * amf)


@dataclass(frozen=True)
class TransmittanceLUT:
    """Tabulated T(column, amf, lambda); values in (0, 1], monotone in column."""

    wavelength_nm: np.ndarray  # (L,)
    delta_ch4_grid: np.ndarray  # (D,) mol/m^2, starts at 0
    amf_grid: np.ndarray  # (A,)
    values: np.ndarray  # (D, A, L) float32
    background_ppb: float = BACKGROUND_CH4_PPB
    provenance: str = "parametric"

    def __post_init__(self):
        d, a, l = len(self.delta_ch4_grid), len(self.amf_grid), len(self.wavelength_nm)
        if self.values.shape != (d, a, l):
            raise IntegrityError(f"LUT values shape {self.values.shape} != ({d},{a},{l})")
        if self.delta_ch4_grid[0] != 0.0:
            raise IntegrityError("column grid must start at 0")
        if self.values.max() > 1.0 + 1e-9 or self.values.min() <= 0.0:
            raise IntegrityError("transmittance must lie in (0, 1]")
        if not np.allclose(self.values[0], 1.0, atol=1e-9):
            raise IntegrityError("T(column=0) must be 1")
        if np.any(np.diff(self.values, axis=0) > 1e-12):
            raise IntegrityError("transmittance must be non-increasing in column")

    @property
    def max_column(self) -> float:
        return float(self.delta_ch4_grid[-1])

    def covers_amf(self, amf: float) -> bool:
        return self.amf_grid[0] - 1e-12 <= amf <= self.amf_grid[-1] + 1e-12


DEFAULT_WAVELENGTH_NM = np.arange(1500.0, 2401.0, 1.0)
DEFAULT_COLUMN_GRID = np.array(
    [0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.65, 0.8,
     1.0, 1.25, 1.5, 1.8, 2.2, 2.6, 3.0, 3.5, 4.0]
)
DEFAULT_AMF_GRID = np.arange(2.0, 6.01, 0.5)


def build_toy_lut(
    model: AbsorptionModel | None = None,
    wavelength_nm: np.ndarray = DEFAULT_WAVELENGTH_NM,
    delta_ch4_grid: np.ndarray = DEFAULT_COLUMN_GRID,
    amf_grid: np.ndarray = DEFAULT_AMF_GRID,
) -> TransmittanceLUT:
    """Tabulate the parametric absorption model on the LUT grid.

    The constructor re-checks the physical invariants (T(0)=1, monotone
    non-increasing in column), so a bad parameter set fails loudly here.
    """
    model = model or AbsorptionModel()
    wavelength_nm = np.asarray(wavelength_nm, dtype=np.float64)
    delta_ch4_grid = np.asarray(delta_ch4_grid, dtype=np.float64)
    amf_grid = np.asarray(amf_grid, dtype=np.float64)
    if np.any(wavelength_nm <= 0) or np.any(delta_ch4_grid < 0) or np.any(amf_grid <= 0):
        raise ValueError("grids must be positive (column grid non-negative)")
    sigma = model.cross_section(wavelength_nm)  # (L,)
    optical_depth = (
        delta_ch4_grid[:, None, None] * amf_grid[None, :, None] * sigma[None, None, :]
    )
    values = np.exp(-optical_depth)
    return TransmittanceLUT(
        wavelength_nm=wavelength_nm,
        delta_ch4_grid=delta_ch4_grid,
        amf_grid=amf_grid,
        values=values.astype(np.float32),
    )


# ---------------------------------------------------------------------------
# spectral context: irradiance, atmosphere, sensor response


@dataclass(frozen=True)
class SpectralContext:
    """Solar irradiance, atmospheric transmittance and per-band SRFs.

    SRFs are normalized sensor responses on the common wavelength grid, keyed
    by (sensor, band) with band in {"swir1", "swir2"}.
    """

    wavelength_nm: np.ndarray
    solar_irradiance: np.ndarray  # W/m^2/nm
    atm_transmittance: np.ndarray
    srfs: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.solar_irradiance < 0):
            raise IntegrityError("solar irradiance must be non-negative")
        if self.atm_transmittance.min() < 0 or self.atm_transmittance.max() > 1.0:
            raise IntegrityError("atmospheric transmittance must lie in [0, 1]")
        for key, srf in self.srfs.items():
            if np.any(srf < 0) or srf.sum() <= 0:
                raise IntegrityError(f"SRF {key} must be non-negative with positive area")

    def srf(self, sensor: str, band: str) -> np.ndarray:
        try:
            return self.srfs[(sensor, band)]
        except KeyError:
            raise KeyError(f"no SRF for sensor={sensor!r} band={band!r}") from None


def _raised_cosine(lam: np.ndarray, center: float, fwhm: float) -> np.ndarray:
    half_width = fwhm  # full response region is 2*fwhm wide, cosine-tapered
    t = (lam - center) / half_width
    srf = 0.5 * (1.0 + np.cos(np.pi * np.clip(t, -1.0, 1.0)))
    srf[np.abs(t) >= 1.0] = 0.0
    return srf


# band centres/widths approximating the two SWIR channels of each sensor
_SRF_SHAPES = {
    ("S2", "swir1"): (1610.0, 60.0),
    ("S2", "swir2"): (2202.0, 120.0),
    ("Landsat", "swir1"): (1609.0, 55.0),
    ("Landsat", "swir2"): (2201.0, 130.0),
}


def default_spectral_context(wavelength_nm: np.ndarray = DEFAULT_WAVELENGTH_NM) -> SpectralContext:
    """Smooth analytic irradiance/atmosphere plus raised-cosine SRFs."""
    lam = np.asarray(wavelength_nm, dtype=np.float64)
    # downslope of the solar curve through the SWIR, W/m^2/nm
    irradiance = 0.28 * np.exp(-(lam - 1500.0) / 900.0)
    # mildly sloped window transmittance with a shallow water-vapour dip
    atm = 0.92 - 5e-5 * (lam - 1500.0) - 0.25 * np.exp(-0.5 * ((lam - 1900.0) / 40.0) ** 2)
    atm = np.clip(atm, 0.0, 1.0)
    srfs = {
        key: _raised_cosine(lam, center, width)
        for key, (center, width) in _SRF_SHAPES.items()
    }
    return SpectralContext(
        wavelength_nm=lam,
        solar_irradiance=irradiance,
        atm_transmittance=atm,
        srfs=srfs,
    )


# ---------------------------------------------------------------------------
# band transmittance (LUT route and dense-grid oracle route)


class BandTransmittanceModel:
    """Spline-backed band transmittance tau(column, amf) for one sensor band.

    Irradiance-weighted band integrals are evaluated once on the LUT grid
    and interpolated with a bicubic spline; clamping above the table maximum
    is counted, not raised.
    """

    def __init__(self, lut: TransmittanceLUT, ctx: SpectralContext, sensor: str, band: str):
        if not np.array_equal(lut.wavelength_nm, ctx.wavelength_nm):
            raise IntegrityError("LUT and spectral context wavelength grids differ")
        self.lut = lut
        self.sensor = sensor
        self.band = band
        self.clamped_pixels = 0
        weight = ctx.solar_irradiance * ctx.atm_transmittance * ctx.srf(sensor, band)
        denom = np.trapezoid(weight, lut.wavelength_nm)
        if denom <= 0:
            raise IntegrityError("band weighting integrates to zero")
        # (D, A) band transmittance table
        tab = np.trapezoid(lut.values.astype(np.float64) * weight, lut.wavelength_nm, axis=2) / denom
        self._table = tab
        self._spline = RectBivariateSpline(
            lut.delta_ch4_grid, lut.amf_grid, tab, kx=3, ky=3
        )

    def tau(self, delta_ch4: np.ndarray, amf: float) -> np.ndarray:
        """Evaluate tau per pixel; columns above the LUT max are clamped."""
        if not self.lut.covers_amf(amf):
            raise ExtrapolationError(
                f"amf {amf:.3f} outside LUT grid "
                f"[{self.lut.amf_grid[0]}, {self.lut.amf_grid[-1]}]"
            )
        col = np.asarray(delta_ch4, dtype=np.float64)
        if np.any(col < 0):
            raise ValueError("column enhancement must be non-negative")
        over = col > self.lut.max_column
        if np.any(over):
            self.clamped_pixels += int(np.count_nonzero(over))
            col = np.minimum(col, self.lut.max_column)
        tau = self._spline.ev(col.ravel(), np.full(col.size, amf)).reshape(col.shape)
        np.clip(tau, 1e-12, 1.0, out=tau)
        tau[col == 0.0] = 1.0
        return tau


_MODEL_CACHE: dict[tuple[int, int, str, str], BandTransmittanceModel] = {}


def band_transmittance(
    lut: TransmittanceLUT,
    ctx: SpectralContext,
    delta_ch4: np.ndarray,
    solar_zenith_deg: float,
    viewing_zenith_deg: float,
    band: str,
    sensor: str = "S2",
) -> np.ndarray:
    """Per-pixel band transmittance map for a column-enhancement map."""
    key = (id(lut), id(ctx), sensor, band)
    model = _MODEL_CACHE.get(key)
    if model is None:
        model = BandTransmittanceModel(lut, ctx, sensor, band)
        _MODEL_CACHE[key] = model
    amf = air_mass_factor(solar_zenith_deg, viewing_zenith_deg)
    return model.tau(np.asarray(delta_ch4), amf)


def band_transmittance_dense(
    model: AbsorptionModel,
    ctx: SpectralContext,
    delta_ch4: float,
    amf: float,
    band: str,
    sensor: str = "S2",
) -> float:
    """Direct dense-grid integration, bypassing the LUT and spline.

    Independent oracle for the spline route: evaluates the analytic
    transmittance at the exact (column, amf) on the fine wavelength grid.
    """
    lam = ctx.wavelength_nm
    weight = ctx.solar_irradiance * ctx.atm_transmittance * ctx.srf(sensor, band)
    t_spectrum = model.transmittance(lam, delta_ch4, amf)
    return float(np.trapezoid(weight * t_spectrum, lam) / np.trapezoid(weight, lam))


# ---------------------------------------------------------------------------
# file interfaces: LUT (JSON header + raw f32 block) and SRF/irradiance CSV


def save_lut(lut: TransmittanceLUT, path) -> None:
    path = Path(path)
    header = {
        "format": "transmittance-lut",
        "version": 1,
        "units": {"delta_ch4": "mol/m^2", "wavelength": "nm", "transmittance": "1"},
        "background_ppb": lut.background_ppb,
        "provenance": lut.provenance,
        "wavelength_nm": lut.wavelength_nm.tolist(),
        "delta_ch4_grid": lut.delta_ch4_grid.tolist(),
        "amf_grid": lut.amf_grid.tolist(),
        "data_file": path.stem + ".bin",
        "data_shape": list(lut.values.shape),
        "data_dtype": "f32",
    }
    path.write_text(json.dumps(header, indent=2))
    (path.parent / header["data_file"]).write_bytes(
        np.ascontiguousarray(lut.values, dtype="<f4").tobytes()
    )


def load_lut(path) -> TransmittanceLUT:
    path = Path(path)
    header = json.loads(path.read_text())
    if header.get("format") != "transmittance-lut":
        raise IntegrityError(f"{path}: not a transmittance LUT header")
    raw = (path.parent / header["data_file"]).read_bytes()
    values = np.frombuffer(raw, dtype="<f4").reshape(header["data_shape"]).copy()
    return TransmittanceLUT(
        wavelength_nm=np.array(header["wavelength_nm"]),
        delta_ch4_grid=np.array(header["delta_ch4_grid"]),
        amf_grid=np.array(header["amf_grid"]),
        values=values,
        background_ppb=header.get("background_ppb", BACKGROUND_CH4_PPB),
        provenance=header.get("provenance", "file"),
    )


def write_spectrum_csv(path, wavelength_nm: np.ndarray, values: np.ndarray) -> None:
    lines = ["lambda_nm,value"]
    lines += [f"{lam:.2f},{val:.8g}" for lam, val in zip(wavelength_nm, values)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_spectrum_csv(path) -> tuple[np.ndarray, np.ndarray]:
    rows = Path(path).read_text().strip().splitlines()[1:]
    pairs = [line.split(",") for line in rows]
    lam = np.array([float(p[0]) for p in pairs])
    val = np.array([float(p[1]) for p in pairs])
    return lam, val
