"""Daily detection pipeline: scan new scenes, score them, persist alerts.

Per scene: clear filter -> reference selection (offshore falls back to the
single-pass retrieval when no reference exists) -> retrieval -> column
inversion -> input assembly -> detector forward -> scene score -> threshold
-> quantification -> pending DetectionRecord. Processing is idempotent per
(site, acquisition time); per-scene failures are logged and isolated.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..analysis import DetectionRecord, extract_mask, flux, ime, rle_encode, scene_score
from ..errors import InsufficientDataError, NoReferenceError, PlumewatchError
from ..inputs import assemble_input
from ..raster import CLEAR, SceneImage, load_scene, passes_clear_filter, write_band_stack
from ..retrieval import RetrievalProduct, invert_to_concentration, mbmp, mbsp, select_reference
from ..spectra import SpectralContext, TransmittanceLUT, build_toy_lut, default_spectral_context
from .registry import SiteRegistry
from .store import AlertStore

log = logging.getLogger("plumewatch.pipeline")

CURSOR_NAME = "ingest_cursor.json"


@dataclass
class PipelineConfig:
    alert_threshold: float = 0.5
    per_site_thresholds: dict[str, float] = field(default_factory=dict)
    component_pixels: int = 100
    pixel_threshold: float = 0.5
    reference_window_days: int = 122
    save_layers: bool = True

    def threshold_for(self, site_id: str) -> float:
        return self.per_site_thresholds.get(site_id, self.alert_threshold)

    @staticmethod
    def from_json(path) -> "PipelineConfig":
        raw = json.loads(Path(path).read_text())
        return PipelineConfig(**raw)


def discover_scenes(scenes_dir, cursor: set[str]) -> list[Path]:
    """Band-stack files not yet seen by the cursor, deterministic order."""
    paths = sorted(Path(scenes_dir).glob("*.msl"))
    return [p for p in paths if p.name not in cursor]


def load_cursor(store_root) -> set[str]:
    path = Path(store_root) / CURSOR_NAME
    if path.exists():
        return set(json.loads(path.read_text()))
    return set()


def save_cursor(store_root, cursor: set[str]) -> None:
    (Path(store_root) / CURSOR_NAME).write_text(json.dumps(sorted(cursor)))


def run_pipeline(
    registry: SiteRegistry,
    scenes_dir,
    detector,
    store: AlertStore,
    config: PipelineConfig | None = None,
    lut: TransmittanceLUT | None = None,
    ctx: SpectralContext | None = None,
) -> list[DetectionRecord]:
    config = config or PipelineConfig()
    lut = lut or build_toy_lut()
    ctx = ctx or default_spectral_context()
    scenes_dir = Path(scenes_dir)

    cursor = load_cursor(store.root)
    new_paths = discover_scenes(scenes_dir, cursor)
    archive = _scan_archive(scenes_dir)

    created: list[DetectionRecord] = []
    for path in new_paths:
        cursor.add(path.name)
        try:
            record = _process_scene(
                path, archive, registry, detector, store, config, lut, ctx
            )
        except PlumewatchError as exc:
            log.warning("scene %s skipped: %s", path.name, exc)
            continue
        except Exception:
            log.exception("scene %s failed", path.name)
            continue
        if record is not None:
            created.append(record)
    save_cursor(store.root, cursor)
    return created


def _scan_archive(scenes_dir: Path) -> dict[str, list[Path]]:
    """All scene files grouped by site (sidecar metadata read lazily)."""
    by_site: dict[str, list[Path]] = {}
    for path in sorted(scenes_dir.glob("*.msl")):
        sidecar = path.with_name(path.stem + ".json")
        if not sidecar.exists():
            continue
        meta = json.loads(sidecar.read_text())
        by_site.setdefault(meta.get("site_id", ""), []).append(path)
    return by_site


def _process_scene(
    path: Path,
    archive: dict[str, list[Path]],
    registry: SiteRegistry,
    detector,
    store: AlertStore,
    config: PipelineConfig,
    lut: TransmittanceLUT,
    ctx: SpectralContext,
) -> DetectionRecord | None:
    scene = load_scene(path)
    site_id = scene.site_id
    acq_iso = scene.acquisition_time.isoformat()
    if site_id not in registry:
        log.info("scene %s: site %s not in registry", path.name, site_id)
        return None
    if store.scene_processed(site_id, acq_iso):
        log.debug("scene %s already processed", path.name)
        return None
    if not passes_clear_filter(scene):
        store.record_scene(site_id, acq_iso, path.stem, 0.0, None, note="failed clear filter")
        return None

    site = registry.get(site_id)
    reference, retrieval = _retrieve(scene, site, archive.get(site_id, []), path, config)
    retrieval = invert_to_concentration(
        retrieval, lut, scene.solar_zenith, scene.viewing_zenith, ctx, scene.sensor
    )
    stack = assemble_input(scene, reference, retrieval)
    prob = detector.predict_proba(stack)
    clear = scene.cloud_mask == CLEAR
    score = scene_score(prob, k=config.component_pixels, valid=clear)

    detection_id = None
    record = None
    if score >= config.threshold_for(site_id):
        mask = extract_mask(prob, config.pixel_threshold)
        delta = np.where(np.isfinite(retrieval.delta_ch4), retrieval.delta_ch4, 0.0)
        ime_kg = ime(mask, delta)
        flux_t = flux(ime_kg, mask, scene.wind_speed)
        detection_id = f"{site_id}:{acq_iso}"
        record = DetectionRecord(
            detection_id=detection_id,
            site_id=site_id,
            scene_ref=path.stem,
            acquisition_time=acq_iso,
            scene_score=score,
            mask_rle=rle_encode(mask),
            mask_shape=mask.shape,
            n_plume_pixels=int(mask.sum()),
            ime_kg=ime_kg,
            flux_t_per_h=flux_t,
            wind_speed_mps=scene.wind_speed,
            created_at=store.clock(),
            reference_ref=None if reference is scene else _ref_stem(reference, archive.get(site_id, [])),
            sensor=scene.sensor,
        )
        store.add_detection(record)
        if config.save_layers:
            _save_layers(store.root, detection_id, prob, retrieval)
    store.record_scene(site_id, acq_iso, path.stem, score, detection_id)
    return record


def _retrieve(scene, site, site_paths, path, config):
    candidates = []
    for p in site_paths:
        if p == path:
            continue
        try:
            candidates.append(load_scene(p))
        except PlumewatchError as exc:
            log.warning("reference candidate %s unreadable: %s", p.name, exc)
    try:
        reference = select_reference(
            scene, candidates, window_days=config.reference_window_days
        )
        return reference, mbmp(scene, reference)
    except (NoReferenceError, InsufficientDataError):
        if site.offshore:
            # offshore: single-pass retrieval, scene doubles as its own reference
            return scene, mbsp(scene)
        raise


def _ref_stem(reference: SceneImage, site_paths: list[Path]) -> str | None:
    for p in site_paths:
        meta_path = p.with_name(p.stem + ".json")
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
            if meta.get("acquisition_time") == reference.acquisition_time.isoformat().replace("+00:00", "Z"):
                return p.stem
    return None


def _save_layers(store_root, detection_id: str, prob: np.ndarray, retrieval: RetrievalProduct) -> None:
    from .render import safe_layer_name

    layers_dir = Path(store_root) / "layers"
    layers_dir.mkdir(exist_ok=True)
    planes = {
        "probability": prob.astype(np.float32),
        "ratio": np.asarray(retrieval.ratio, dtype=np.float32),
    }
    if retrieval.delta_ch4 is not None:
        planes["delta_ch4"] = np.asarray(retrieval.delta_ch4, dtype=np.float32)
    write_band_stack(
        layers_dir / f"{safe_layer_name(detection_id)}.msl",
        planes,
        {"detection_id": detection_id, "method": retrieval.method},
    )
