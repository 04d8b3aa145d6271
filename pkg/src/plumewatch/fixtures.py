"""Deterministic desk-scale fixtures: textured scene series, plume banks and
controlled-release scenarios.

Backgrounds are sums of large-scale smooth random fields and small-scale
texture, band-correlated through a fixed mixing matrix, with temporal
consistency across a site's series. Occasional "surface change" patches
perturb the SWIR bands differentially between acquisitions — the classic
false-plume artifact of multi-pass retrievals — with a co-located near-infrared
signature the detector can learn to exploit. All generation is a pure
function of (config, site index).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .analysis import delta_for_flux
from .raster import CLOUD, MISSING, SHADOW, PlumeLabel, SceneImage, save_scene
from .simulate import BankPlume, SiteData, simulate_plume_scene
from .spectra import SpectralContext, TransmittanceLUT, build_toy_lut, default_spectral_context

EPOCH = datetime(2024, 1, 1, 10, 30, tzinfo=timezone.utc)

# band means (blue, green, red, nir, swir1, swir2) by background type
BACKGROUND_MEANS = {
    "arid": np.array([0.18, 0.22, 0.28, 0.33, 0.36, 0.31]),
    "offshore": np.array([0.055, 0.045, 0.032, 0.018, 0.014, 0.011]),
}

# small-scale texture mixing: 6 bands x 3 latent fields
_TEXTURE_MIX = np.array(
    [
        [0.9, 0.1, 0.0],
        [0.85, 0.15, 0.0],
        [0.8, 0.2, 0.05],
        [0.6, 0.4, 0.1],
        [0.5, 0.3, 0.3],
        [0.5, 0.25, 0.35],
    ]
)


@dataclass(frozen=True)
class FixtureConfig:
    seed: int = 0
    n_sites: int = 50
    scenes_per_site: int = 20
    size: int = 64
    offshore_fraction: float = 0.15
    no_plume_site_fraction: float = 0.3
    plume_scene_rate: float = 0.2
    flux_bounds_t_per_h: tuple[float, float] = (1.0, 8.0)
    band_noise: float = 0.006
    artifact_rate: float = 0.3
    cloud_scene_fraction: float = 0.25
    revisit_days: float = 5.0

    def __post_init__(self):
        for p in (self.offshore_fraction, self.no_plume_site_fraction,
                  self.plume_scene_rate, self.artifact_rate, self.cloud_scene_fraction):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        lo, hi = self.flux_bounds_t_per_h
        if lo <= 0 or hi <= lo:
            raise ValueError("flux bounds must be positive and ordered")


def _smooth_field(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    f = gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    f -= f.mean()
    return f / max(f.std(), 1e-9)


def _site_rng(config: FixtureConfig, site_index: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([config.seed, site_index, stream])


def _plume_shape(rng: np.random.Generator, shape, direction_deg: float, n_steps: int) -> np.ndarray:
    """Meandering deposition walk along the wind direction; returns a
    non-negative column-shape map peaking near the origin."""
    h, w = shape
    canvas = np.zeros((h, w))
    y, x = h / 2.0, w / 2.0
    theta = np.radians(direction_deg)
    yy, xx = np.mgrid[0:h, 0:w]
    for step in range(n_steps):
        theta += rng.normal(0.0, 0.18)
        x += np.cos(theta)
        y += np.sin(theta)
        if not (2 <= x < w - 2 and 2 <= y < h - 2):
            break
        radius = 1.2 + 0.09 * step
        amp = np.exp(-2.2 * step / n_steps)
        canvas += amp * np.exp(-0.5 * (((xx - x) ** 2 + (yy - y) ** 2) / radius**2))
    peak = canvas.max()
    return canvas / peak if peak > 0 else canvas


def make_plume_label(
    rng: np.random.Generator,
    shape,
    wind_u: float,
    wind_v: float,
    flux_t_per_h: float,
) -> PlumeLabel:
    """Synthesize a plume label whose flux model closes on the requested rate."""
    direction = np.degrees(np.arctan2(wind_v, wind_u))
    n_steps = int(rng.integers(16, 30))
    shape_map = _plume_shape(rng, shape, direction, n_steps)
    if shape_map.max() <= 0:
        # degenerate walk; fall back to a compact blob at the centre
        yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
        shape_map = np.exp(-0.5 * (((xx - shape[1] / 2) ** 2 + (yy - shape[0] / 2) ** 2) / 9.0))
    mask = shape_map > 0.08 * shape_map.max()
    wind_speed = float(np.hypot(wind_u, wind_v))
    delta = delta_for_flux(shape_map, mask, flux_t_per_h, wind_speed)
    return PlumeLabel(mask=mask, delta_ch4=delta.astype(np.float32), flux_t_per_h=flux_t_per_h)


@dataclass
class SiteFixture:
    site: SiteData
    bank: list[BankPlume] = field(default_factory=list)


def generate_site_series(
    config: FixtureConfig,
    site_index: int,
    lut: TransmittanceLUT | None = None,
    ctx: SpectralContext | None = None,
) -> SiteData:
    """Generate one site's scene series with ground-truth labels.

    The returned labels list aligns with the scenes: ``None`` for plume-free
    acquisitions, a PlumeLabel for emissions. Deterministic per
    (config.seed, site_index).
    """
    rng = _site_rng(config, site_index)
    lut = lut or _default_lut()
    ctx = ctx or _default_ctx()
    size = config.size
    offshore = rng.random() < config.offshore_fraction
    background = "offshore" if offshore else "arid"
    means = BACKGROUND_MEANS[background]

    base_large = _smooth_field(rng, (size, size), sigma=size / 6)
    latents = [_smooth_field(rng, (size, size), sigma=1.6) for _ in range(3)]
    site_texture = np.stack(
        [
            means[b] * (1.0 + 0.22 * base_large + 0.10 * sum(_TEXTURE_MIX[b, k] * latents[k] for k in range(3)))
            for b in range(6)
        ]
    )
    np.maximum(site_texture, 0.25 * means[:, None, None], out=site_texture)

    if rng.random() < config.no_plume_site_fraction:
        plume_count = 0
    else:
        plume_count = 1 + rng.binomial(config.scenes_per_site - 1, config.plume_scene_rate)
    # plumes happen late enough that a reference can exist
    eligible = np.arange(2, config.scenes_per_site)
    plume_indices = set(
        rng.choice(eligible, size=min(plume_count, len(eligible)), replace=False).tolist()
    )

    site_id = f"site-{site_index:04d}"
    start = EPOCH + timedelta(days=float(rng.integers(0, 30)))
    scenes: list[SceneImage] = []
    labels: list[PlumeLabel | None] = []
    for i in range(config.scenes_per_site):
        srng = _site_rng(config, site_index, stream=1 + i)
        t = start + timedelta(days=config.revisit_days * i + float(srng.random()) * 0.2)
        brightness = 1.0 + 0.05 * float(srng.normal())
        common = _smooth_field(srng, (size, size), sigma=1.2)
        bands = np.empty((6, size, size), dtype=np.float64)
        for b in range(6):
            own = _smooth_field(srng, (size, size), sigma=1.2)
            rel = 0.6 * common + 0.8 * own
            # relative texture change between passes plus an absolute sensor floor
            bands[b] = site_texture[b] * brightness * (1.0 + config.band_noise * rel)
            bands[b] += 0.0012 * srng.standard_normal((size, size))
        # surface-change artifact: differential SWIR patch with a NIR co-signature
        if srng.random() < config.artifact_rate:
            bands = _apply_artifact(srng, bands)

        if config.cloud_scene_fraction > 0:
            heavy = srng.random() < config.cloud_scene_fraction
            cloud_mask = _cloud_mask(srng, size, heavy=heavy)
        else:
            cloud_mask = np.zeros((size, size), dtype=np.uint8)
        bands = _brighten_clouds(bands, cloud_mask)

        if i in plume_indices:
            speed = float(srng.uniform(1.5, 8.0))
            theta = float(srng.uniform(0, 2 * np.pi))
            wind_u, wind_v = speed * np.cos(theta), speed * np.sin(theta)
        else:
            speed = float(srng.uniform(0.5, 11.0))
            theta = float(srng.uniform(0, 2 * np.pi))
            wind_u, wind_v = speed * np.cos(theta), speed * np.sin(theta)

        scene = SceneImage(
            site_id=site_id,
            acquisition_time=t,
            sensor="S2" if srng.random() < 0.7 else "Landsat",
            bands=np.clip(bands, 0.0, None).astype(np.float32),
            cloud_mask=cloud_mask,
            wind_u=wind_u,
            wind_v=wind_v,
            solar_zenith=float(srng.uniform(20.0, 55.0)),
            viewing_zenith=float(srng.uniform(0.0, 10.0)),
        )

        if i in plume_indices:
            lo, hi = config.flux_bounds_t_per_h
            flux = float(np.exp(srng.uniform(np.log(lo), np.log(hi))))
            label = make_plume_label(srng, (size, size), wind_u, wind_v, flux)
            scene = simulate_plume_scene(scene, label, lut, ctx)
            labels.append(label)
        else:
            labels.append(None)
        scenes.append(scene)
    return SiteData(site_id=site_id, scenes=scenes, labels=labels, offshore=offshore)


def _apply_artifact(rng: np.random.Generator, bands: np.ndarray) -> np.ndarray:
    size = bands.shape[1]
    yy, xx = np.mgrid[0:size, 0:size]
    cy, cx = rng.uniform(8, size - 8, size=2)
    ry, rx = rng.uniform(4.0, 11.0, size=2)
    angle = rng.uniform(0, np.pi)
    dy, dx = yy - cy, xx - cx
    u = dx * np.cos(angle) + dy * np.sin(angle)
    v = -dx * np.sin(angle) + dy * np.cos(angle)
    patch = np.exp(-0.5 * ((u / rx) ** 2 + (v / ry) ** 2))
    # swir2 dims more than swir1 (moisture-like), nir responds visibly
    a2 = rng.uniform(0.03, 0.09) * rng.choice([-1.0, 1.0])
    a1 = a2 * rng.uniform(0.2, 0.55)
    a_nir = a2 * rng.uniform(0.8, 1.4)
    out = bands.copy()
    out[5] *= 1.0 + a2 * patch
    out[4] *= 1.0 + a1 * patch
    out[3] *= 1.0 + a_nir * patch
    out[2] *= 1.0 + 0.5 * a_nir * patch
    return out


def _cloud_mask(rng: np.random.Generator, size: int, heavy: bool) -> np.ndarray:
    mask = np.zeros((size, size), dtype=np.uint8)
    field_ = _smooth_field(rng, (size, size), sigma=size / 8)
    if heavy:
        target = float(rng.uniform(0.15, 0.75))
    else:
        target = float(rng.uniform(0.0, 0.04))
    if target > 0:
        cutoff = np.quantile(field_, 1.0 - target)
        cloud = field_ >= cutoff
        mask[cloud] = CLOUD
        shadow = np.roll(cloud, shift=(3, 3), axis=(0, 1)) & ~cloud
        mask[shadow] = SHADOW
    if rng.random() < 0.05:
        mask[:, : rng.integers(1, 4)] = MISSING
    return mask


def _brighten_clouds(bands: np.ndarray, cloud_mask: np.ndarray) -> np.ndarray:
    out = bands.copy()
    cloud = cloud_mask == CLOUD
    shadow = cloud_mask == SHADOW
    out[:, cloud] = 0.55 + 0.1 * out[:, cloud]
    out[:, shadow] *= 0.55
    return out


_LUT_SINGLETON: dict = {}


def _default_lut() -> TransmittanceLUT:
    if "lut" not in _LUT_SINGLETON:
        _LUT_SINGLETON["lut"] = build_toy_lut()
    return _LUT_SINGLETON["lut"]


def _default_ctx() -> SpectralContext:
    if "ctx" not in _LUT_SINGLETON:
        _LUT_SINGLETON["ctx"] = default_spectral_context()
    return _LUT_SINGLETON["ctx"]


def generate_fixture(config: FixtureConfig) -> list[SiteData]:
    lut, ctx = _default_lut(), _default_ctx()
    return [generate_site_series(config, i, lut, ctx) for i in range(config.n_sites)]


def build_plume_bank(sites: list[SiteData]) -> list[BankPlume]:
    """Harvest every labelled plume with the wind it occurred under."""
    bank = []
    for site in sites:
        for scene, label in zip(site.scenes, site.labels):
            if label is not None and label.is_positive:
                bank.append(
                    BankPlume(
                        label=label,
                        wind_speed=scene.wind_speed,
                        wind_direction_deg=scene.wind_direction_deg,
                    )
                )
    return bank


# ---------------------------------------------------------------------------
# controlled-release scenario

RELEASE_LADDER_T_PER_H = (0.75, 1.0, 1.5, 2.0, 2.5, 3.5, 4.5, 5.5, 7.5)


def controlled_release_scenario(
    config: FixtureConfig,
    fluxes=RELEASE_LADDER_T_PER_H,
    n_no_emission: int = 6,
    site_index: int = 900_001,
) -> SiteData:
    """A single test site emitting at known rates plus no-emission passes.

    Mirrors a single-blind release layout: a clean arid pad observed
    repeatedly, with the emission rate stepped through ``fluxes``. Scenes
    carry empty labels when nothing was released.
    """
    base = replace(
        config,
        scenes_per_site=len(fluxes) + n_no_emission + 3,
        artifact_rate=0.0,
        cloud_scene_fraction=0.0,
        offshore_fraction=0.0,
        no_plume_site_fraction=1.0,  # generate plume-free series, inject below
    )
    site = generate_site_series(base, site_index)
    rng = _site_rng(config, site_index, stream=7777)
    lut, ctx = _default_lut(), _default_ctx()

    order = list(range(3, base.scenes_per_site))
    scenes, labels = list(site.scenes), list(site.labels)
    for slot, flux in zip(order, fluxes):
        scene = scenes[slot]
        speed = float(rng.uniform(2.5, 5.0))
        theta = float(rng.uniform(0, 2 * np.pi))
        wind_u, wind_v = speed * np.cos(theta), speed * np.sin(theta)
        scene = replace(scene, wind_u=wind_u, wind_v=wind_v)
        label = make_plume_label(rng, scene.cloud_mask.shape, wind_u, wind_v, flux)
        scenes[slot] = simulate_plume_scene(scene, label, lut, ctx)
        labels[slot] = label
    return SiteData(site_id=f"release-{site_index}", scenes=scenes, labels=labels, offshore=False)


# ---------------------------------------------------------------------------
# on-disk fixture trees


def write_fixture(config: FixtureConfig, out_dir) -> dict:
    """Write band-stack files plus a labels manifest; returns the manifest."""
    out_dir = Path(out_dir)
    scenes_dir = out_dir / "scenes"
    labels_dir = out_dir / "labels"
    scenes_dir.mkdir(parents=True, exist_ok=True)
    labels_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"config": config.__dict__ | {"flux_bounds_t_per_h": list(config.flux_bounds_t_per_h)}, "sites": []}
    for i in range(config.n_sites):
        site = generate_site_series(config, i)
        entry = {"site_id": site.site_id, "offshore": site.offshore, "scenes": []}
        for j, (scene, label) in enumerate(zip(site.scenes, site.labels)):
            stem = f"{site.site_id}_{j:03d}"
            save_scene(scene, scenes_dir / f"{stem}.msl")
            scene_entry = {
                "file": f"scenes/{stem}.msl",
                "acquisition_time": scene.acquisition_time.isoformat(),
                "has_plume": label is not None and label.is_positive,
            }
            if label is not None and label.is_positive:
                from .raster import write_band_stack

                write_band_stack(
                    labels_dir / f"{stem}.msl",
                    {
                        "mask": label.mask.astype(np.uint8),
                        "delta_ch4": label.delta_ch4.astype(np.float32),
                    },
                    {"flux_t_per_h": label.flux_t_per_h},
                )
                scene_entry["label_file"] = f"labels/{stem}.msl"
                scene_entry["flux_t_per_h"] = label.flux_t_per_h
            entry["scenes"].append(scene_entry)
        manifest["sites"].append(entry)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def load_fixture(out_dir) -> list[SiteData]:
    """Rehydrate SiteData lists from a written fixture tree."""
    from .raster import load_scene, read_band_stack

    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "manifest.json").read_text())
    sites = []
    for entry in manifest["sites"]:
        scenes, labels = [], []
        for scene_entry in entry["scenes"]:
            scene = load_scene(out_dir / scene_entry["file"])
            scenes.append(scene)
            if scene_entry.get("label_file"):
                planes, meta = read_band_stack(out_dir / scene_entry["label_file"])
                labels.append(
                    PlumeLabel(
                        mask=planes["mask"].astype(bool),
                        delta_ch4=planes["delta_ch4"],
                        flux_t_per_h=meta.get("flux_t_per_h"),
                    )
                )
            else:
                labels.append(None)
        sites.append(SiteData(site_id=entry["site_id"], scenes=scenes,
                              labels=labels, offshore=entry["offshore"]))
    return sites
