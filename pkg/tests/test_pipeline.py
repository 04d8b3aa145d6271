import json

import numpy as np
import pytest

from plumewatch.fixtures import FixtureConfig, write_fixture
from plumewatch.service.pipeline import PipelineConfig, run_pipeline
from plumewatch.service.registry import SiteRecord, SiteRegistry
from plumewatch.service.store import AlertStore


class RatioThresholdDetector:
    """Pipeline test stub: probability derived from the raw retrieval plane.

    Keeps the integration test independent of training; plume absorption
    pushes the ratio well below the noise floor, which maps to p ~ 1.
    """

    def predict_proba(self, stack):
        ratio = stack[13]
        return np.clip((0.985 - ratio) * 50.0, 0.0, 1.0)


def _fixture_store(tmp_path, n_sites=3, scenes_per_site=8, seed=33):
    config = FixtureConfig(
        seed=seed, n_sites=n_sites, scenes_per_site=scenes_per_site,
        offshore_fraction=0.0, artifact_rate=0.0, cloud_scene_fraction=0.2,
    )
    manifest = write_fixture(config, tmp_path)
    sites = [
        SiteRecord(site_id=e["site_id"], name=e["site_id"], country="Fixtureland",
                   latitude=1.0 * i, longitude=2.0 * i, offshore=e["offshore"])
        for i, e in enumerate(manifest["sites"])
    ]
    return SiteRegistry(sites), tmp_path / "scenes", manifest


def fixed_clock():
    return "2024-06-01T06:30:00+00:00"


class TestRunPipeline:
    def test_end_to_end_detections(self, tmp_path):
        registry, scenes_dir, manifest = _fixture_store(tmp_path)
        store = AlertStore(tmp_path / "store", clock=fixed_clock)
        records = run_pipeline(registry, scenes_dir, RatioThresholdDetector(), store)
        assert records, "expected at least one detection from injected plumes"
        for rec in records:
            assert rec.review_status == "pending"
            assert rec.flux_t_per_h > 0
            assert rec.n_plume_pixels > 0
        # layer stacks persisted for rendering
        assert len(list((tmp_path / "store" / "layers").glob("*.msl"))) == len(records)

    def test_detections_cover_labelled_plumes(self, tmp_path):
        registry, scenes_dir, manifest = _fixture_store(tmp_path)
        store = AlertStore(tmp_path / "store", clock=fixed_clock)
        records = run_pipeline(registry, scenes_dir, RatioThresholdDetector(), store)
        detected_keys = {(r.site_id, r.acquisition_time) for r in records}
        # count labelled plumes that were processable (clear + reference available)
        labelled = set()
        for entry in manifest["sites"]:
            for scene in entry["scenes"]:
                if scene.get("has_plume"):
                    labelled.add((entry["site_id"], scene["acquisition_time"]))
        overlap = len(detected_keys & labelled)
        assert overlap >= len(labelled) * 0.5

    def test_rerun_is_idempotent_bytewise(self, tmp_path):
        registry, scenes_dir, _ = _fixture_store(tmp_path)
        store_dir = tmp_path / "store"
        store = AlertStore(store_dir, clock=fixed_clock)
        run_pipeline(registry, scenes_dir, RatioThresholdDetector(), store)
        first = (store_dir / "events.jsonl").read_bytes()

        # same store object
        run_pipeline(registry, scenes_dir, RatioThresholdDetector(), store)
        assert (store_dir / "events.jsonl").read_bytes() == first

        # fresh process, cursor wiped: idempotency key still guards
        (store_dir / "ingest_cursor.json").unlink()
        fresh = AlertStore(store_dir, clock=fixed_clock)
        run_pipeline(registry, scenes_dir, RatioThresholdDetector(), fresh)
        assert (store_dir / "events.jsonl").read_bytes() == first

    def test_cloudy_scene_skipped_and_logged(self, tmp_path):
        registry, scenes_dir, manifest = _fixture_store(tmp_path, seed=35)
        store = AlertStore(tmp_path / "store", clock=fixed_clock)
        run_pipeline(registry, scenes_dir, RatioThresholdDetector(), store)
        notes = [e.get("note", "") for e in store.scene_events]
        # fixture includes heavy-cloud scenes at this seed
        assert any("clear filter" in n for n in notes)
        flagged = [e for e in store.scene_events if "clear filter" in e.get("note", "")]
        assert all(e["detection_id"] is None for e in flagged)

    def test_unknown_site_scenes_ignored(self, tmp_path):
        registry, scenes_dir, _ = _fixture_store(tmp_path)
        small_registry = SiteRegistry(list(registry)[:1])
        store = AlertStore(tmp_path / "store", clock=fixed_clock)
        records = run_pipeline(small_registry, scenes_dir, RatioThresholdDetector(), store)
        assert all(r.site_id == list(small_registry)[0].site_id for r in records)

    def test_corrupt_scene_isolated_pipeline_continues(self, tmp_path):
        registry, scenes_dir, _ = _fixture_store(tmp_path)
        store_a = AlertStore(tmp_path / "store_a", clock=fixed_clock)
        expected = run_pipeline(registry, scenes_dir, RatioThresholdDetector(), store_a)

        # corrupt one scene file; every other scene must still be processed,
        # including scenes that would have considered it as a reference
        victim = sorted(scenes_dir.glob("*.msl"))[3]
        victim.write_bytes(victim.read_bytes()[:50])
        store_b = AlertStore(tmp_path / "store_b", clock=fixed_clock)
        records = run_pipeline(registry, scenes_dir, RatioThresholdDetector(), store_b)
        assert len(records) >= len(expected) - 1  # at most the victim itself is lost

    def test_per_site_threshold_override(self, tmp_path):
        registry, scenes_dir, _ = _fixture_store(tmp_path)
        store_a = AlertStore(tmp_path / "store_a", clock=fixed_clock)
        base = run_pipeline(registry, scenes_dir, RatioThresholdDetector(), store_a)
        site_with_detection = base[0].site_id
        config = PipelineConfig(per_site_thresholds={site_with_detection: 1.1})
        store_b = AlertStore(tmp_path / "store_b", clock=fixed_clock)
        strict = run_pipeline(registry, scenes_dir, RatioThresholdDetector(), store_b, config)
        assert all(r.site_id != site_with_detection for r in strict)
