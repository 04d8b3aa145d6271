"""Physics-based plume injection and the stratified training-example sampler.

Training plumes are simulated by taking a real (labelled) methane column map
from the plume bank, rotating it to the wind direction of the clear target
scene, converting it to per-band transmittance maps through the LUT, and
multiplying the SWIR bands of the clear image by those maps. The sampler
applies the stratified simulate-vs-real rule driven by how many real plumes
a site has.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoReferenceError, RotationRejectedError
from .inputs import ChannelStats, assemble_input
from .raster import PlumeLabel, SceneImage, passes_clear_filter
from .retrieval import mbmp, select_reference
from .spectra import SpectralContext, TransmittanceLUT, band_transmittance

WIND_SPEED_TOLERANCE = 1.5  # m/s between donor plume and clear image
MAX_SIMULATION_WIND = 9.0  # m/s; stronger winds disperse plumes too fast
DONOR_DRAW_CAP = 50
MAX_OFFGRID_MASS_FRACTION = 0.2

# probability of simulating (vs reusing a real plume) by site plume count
SIMULATE_PROB_NO_PLUMES = 1.0
SIMULATE_PROB_FEW_PLUMES = 0.9  # 1-5 real plumes
SIMULATE_PROB_MANY_PLUMES = 0.1  # > 5 real plumes
POSITIVE_EXAMPLE_PROB = 0.5


def wind_compatible(plume_wind_speed: float, clear_wind_speed: float) -> bool:
    """Donor plume and clear image winds must be close, and not too strong."""
    if plume_wind_speed < 0 or clear_wind_speed < 0:
        raise ValueError("wind speeds must be non-negative")
    return (
        abs(plume_wind_speed - clear_wind_speed) < WIND_SPEED_TOLERANCE
        and clear_wind_speed <= MAX_SIMULATION_WIND
    )


def simulate_probability(n_real_plumes: int) -> float:
    if n_real_plumes == 0:
        return SIMULATE_PROB_NO_PLUMES
    if n_real_plumes <= 5:
        return SIMULATE_PROB_FEW_PLUMES
    return SIMULATE_PROB_MANY_PLUMES


def inject_plume(scene: SceneImage, tau_swir1: np.ndarray, tau_swir2: np.ndarray) -> SceneImage:
    """Multiply the SWIR bands by plume transmittance maps.

    Surface reflectance is assumed constant over each band's wavelengths, so
    the plume acts as a pure multiplicative transmittance on the band value.
    All other planes and metadata are untouched.
    """
    for tau in (tau_swir1, tau_swir2):
        if tau.shape != scene.bands.shape[1:]:
            raise ValueError(f"tau shape {tau.shape} != scene {scene.bands.shape[1:]}")
        if np.any(tau <= 0) or np.any(tau > 1.0):
            raise ValueError("transmittance must lie in (0, 1]")
    bands = scene.bands.copy()
    bands[4] = (bands[4].astype(np.float64) * tau_swir1).astype(bands.dtype)
    bands[5] = (bands[5].astype(np.float64) * tau_swir2).astype(bands.dtype)
    return scene.with_bands(bands)


def rotate_plume(label: PlumeLabel, from_direction_deg: float, to_direction_deg: float) -> PlumeLabel:
    """Rotate a plume label about its origin (maximum-column) pixel.

    The column map is resampled bilinearly and the mask nearest-neighbour.
    Raises RotationRejectedError when more than 20% of the plume mass would
    leave the grid; the caller draws another donor.
    """
    if label.n_pixels == 0:
        raise ValueError("cannot rotate an empty plume")
    angle = np.radians(to_direction_deg - from_direction_deg)
    h, w = label.delta_ch4.shape
    origin_flat = int(np.argmax(label.delta_ch4))
    oy, ox = divmod(origin_flat, w)

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    # inverse mapping: output pixel -> source pixel, rotating about the origin
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    dx, dy = xx - ox, yy - oy
    src_x = ox + cos_a * dx + sin_a * dy
    src_y = oy - sin_a * dx + cos_a * dy

    delta = _bilinear_sample(label.delta_ch4.astype(np.float64), src_x, src_y)
    nearest_x = np.clip(np.rint(src_x).astype(int), 0, w - 1)
    nearest_y = np.clip(np.rint(src_y).astype(int), 0, h - 1)
    inside = (src_x >= -0.5) & (src_x <= w - 0.5) & (src_y >= -0.5) & (src_y <= h - 0.5)
    mask = label.mask[nearest_y, nearest_x] & inside

    mass_before = float(label.delta_ch4.sum())
    mass_after = float(delta.sum())
    if mass_before > 0 and (mass_before - mass_after) / mass_before > MAX_OFFGRID_MASS_FRACTION:
        raise RotationRejectedError(
            f"rotation lost {(1 - mass_after / mass_before):.0%} of plume mass"
        )
    # the bilinear halo extends a pixel past the nearest-neighbour mask; keep
    # those pixels in the mask rather than clipping their mass away
    mask |= delta > 0.0
    return PlumeLabel(mask=mask, delta_ch4=delta.astype(np.float32), flux_t_per_h=label.flux_t_per_h)


def _bilinear_sample(plane: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    fx, fy = x - x0, y - y0
    out = np.zeros_like(x)
    for dy in (0, 1):
        for dx in (0, 1):
            wgt = (fx if dx else 1 - fx) * (fy if dy else 1 - fy)
            xi = x0 + dx
            yi = y0 + dy
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            vals = np.zeros_like(out)
            vals[valid] = plane[yi[valid], xi[valid]]
            out += wgt * vals
    return out


# ---------------------------------------------------------------------------
# training-example sampler


@dataclass(frozen=True)
class BankPlume:
    """Donor plume: labelled column map plus the wind it was observed under."""

    label: PlumeLabel
    wind_speed: float
    wind_direction_deg: float


@dataclass
class SiteData:
    """Everything the sampler needs for one monitored site."""

    site_id: str
    scenes: list[SceneImage]
    labels: list[PlumeLabel | None]  # aligned with scenes; None = no plume
    offshore: bool = False

    def __post_init__(self):
        if len(self.scenes) != len(self.labels):
            raise ValueError("scenes and labels must align")

    @property
    def real_plume_indices(self) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab is not None and lab.is_positive]

    @property
    def n_real_plumes(self) -> int:
        return len(self.real_plume_indices)


@dataclass
class TrainingExample:
    stack: np.ndarray  # (16, H, W) float32
    label: PlumeLabel
    is_simulated: bool
    site_id: str
    scene_index: int


class TrainingSampler:
    """Stratified sampler over sites, mixing real and simulated plumes.

    Per draw: pick a site uniformly, flip the positive/negative indicator
    (p=0.5), then for positives apply the simulate-vs-real probability from
    the site's real-plume count. Simulation draws wind-compatible donors from
    the plume bank, rotates them into the target wind, converts to band
    transmittances and injects. All randomness comes from the generator
    passed in, so a fixed seed reproduces the stream bit for bit.
    """

    def __init__(
        self,
        sites: list[SiteData],
        bank: list[BankPlume],
        lut: TransmittanceLUT,
        ctx: SpectralContext,
        stats: ChannelStats | None = None,
        window_days: int = 122,
    ):
        if not sites:
            raise ValueError("at least one site required")
        self.sites = sites
        self.bank = bank
        self.lut = lut
        self.ctx = ctx
        self.stats = stats
        self.skipped_draws = 0
        self._pairs: dict[str, list[tuple[int, int]]] = {}
        self._mbsp_cache: dict[tuple[str, int], np.ndarray] = {}
        for site in sites:
            self._pairs[site.site_id] = self._eligible_pairs(site, window_days)

    def _eligible_pairs(self, site: SiteData, window_days: int) -> list[tuple[int, int]]:
        """(target_idx, reference_idx) pairs with a usable clear reference."""
        pairs = []
        for i, scene in enumerate(site.scenes):
            if not passes_clear_filter(scene):
                continue
            candidates = [s for j, s in enumerate(site.scenes) if j != i]
            try:
                ref = select_reference(scene, candidates, window_days=window_days)
            except NoReferenceError:
                continue
            pairs.append((i, site.scenes.index(ref)))
        return pairs

    # -- example assembly -------------------------------------------------

    def _stack(self, site: SiteData, scene: SceneImage, ref: SceneImage) -> np.ndarray:
        retrieval = mbmp(scene, ref)
        return assemble_input(scene, ref, retrieval, stats=self.stats)

    def sample(self, rng: np.random.Generator) -> TrainingExample:
        site = self.sites[int(rng.integers(len(self.sites)))]
        want_positive = rng.random() < POSITIVE_EXAMPLE_PROB
        pairs = self._pairs[site.site_id]
        if not pairs:
            raise ValueError(f"site {site.site_id} has no usable scene/reference pairs")

        if want_positive:
            simulate = rng.random() < simulate_probability(site.n_real_plumes)
            if not simulate:
                return self._real_positive(site, rng)
            example = self._simulated_positive(site, pairs, rng)
            if example is not None:
                return example
            self.skipped_draws += 1
        return self._negative(site, pairs, rng)

    def _real_positive(self, site: SiteData, rng: np.random.Generator) -> TrainingExample:
        idx_choices = site.real_plume_indices
        idx = idx_choices[int(rng.integers(len(idx_choices)))]
        scene = site.scenes[idx]
        candidates = [s for j, s in enumerate(site.scenes) if j != idx]
        try:
            ref = select_reference(scene, candidates)
        except NoReferenceError:
            ref = scene  # degenerate fallback; the MBMP plane is then flat
        return TrainingExample(
            stack=self._stack(site, scene, ref),
            label=site.labels[idx],
            is_simulated=False,
            site_id=site.site_id,
            scene_index=idx,
        )

    def _negative_pairs(self, site: SiteData, pairs) -> list[tuple[int, int]]:
        return [(i, j) for i, j in pairs if site.labels[i] is None or not site.labels[i].is_positive]

    def _negative(self, site: SiteData, pairs, rng: np.random.Generator) -> TrainingExample:
        neg_pairs = self._negative_pairs(site, pairs) or pairs
        i, j = neg_pairs[int(rng.integers(len(neg_pairs)))]
        scene, ref = site.scenes[i], site.scenes[j]
        return TrainingExample(
            stack=self._stack(site, scene, ref),
            label=PlumeLabel.empty(scene.cloud_mask.shape),
            is_simulated=False,
            site_id=site.site_id,
            scene_index=i,
        )

    def _simulated_positive(self, site: SiteData, pairs, rng: np.random.Generator):
        neg_pairs = self._negative_pairs(site, pairs)
        if not neg_pairs or not self.bank:
            return None
        i, j = neg_pairs[int(rng.integers(len(neg_pairs)))]
        scene, ref = site.scenes[i], site.scenes[j]
        if scene.wind_speed > MAX_SIMULATION_WIND:
            return None
        for _ in range(DONOR_DRAW_CAP):
            donor = self.bank[int(rng.integers(len(self.bank)))]
            if not wind_compatible(donor.wind_speed, scene.wind_speed):
                continue
            try:
                label = rotate_plume(
                    donor.label, donor.wind_direction_deg, scene.wind_direction_deg
                )
            except RotationRejectedError:
                continue
            injected = simulate_plume_scene(scene, label, self.lut, self.ctx)
            return TrainingExample(
                stack=self._stack(site, injected, ref),
                label=label,
                is_simulated=True,
                site_id=site.site_id,
                scene_index=i,
            )
        return None


def simulate_plume_scene(
    scene: SceneImage,
    label: PlumeLabel,
    lut: TransmittanceLUT,
    ctx: SpectralContext,
) -> SceneImage:
    """Inject a labelled column map into a clear scene through the LUT."""
    tau1 = band_transmittance(
        lut, ctx, label.delta_ch4, scene.solar_zenith, scene.viewing_zenith,
        band="swir1", sensor=scene.sensor,
    )
    tau2 = band_transmittance(
        lut, ctx, label.delta_ch4, scene.solar_zenith, scene.viewing_zenith,
        band="swir2", sensor=scene.sensor,
    )
    return inject_plume(scene, tau1, tau2)
