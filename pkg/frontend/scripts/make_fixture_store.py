"""Build a small fixture-backed store for frontend contract tests.

Generates synthetic scenes, runs the detection pipeline with a physics
threshold stand-in for the trained model (keeps the frontend suite fast and
training-free), and leaves everything pending for the review tests.

Usage: python3 make_fixture_store.py <store_dir>
"""

import sys

import numpy as np

from plumewatch.fixtures import FixtureConfig, write_fixture
from plumewatch.service.pipeline import run_pipeline
from plumewatch.service.registry import SiteRecord, SiteRegistry
from plumewatch.service.store import AlertStore


class RatioThresholdDetector:
    def predict_proba(self, stack):
        ratio = stack[13]
        return np.clip((0.985 - ratio) * 50.0, 0.0, 1.0)


def main(store_dir: str) -> None:
    config = FixtureConfig(
        seed=77, n_sites=4, scenes_per_site=10,
        offshore_fraction=0.0, artifact_rate=0.0, cloud_scene_fraction=0.1,
        no_plume_site_fraction=0.0, plume_scene_rate=0.3,
    )
    manifest = write_fixture(config, store_dir)
    registry = SiteRegistry(
        [
            SiteRecord(
                site_id=entry["site_id"],
                name=f"Fixture {entry['site_id']}",
                country="Fixtureland",
                latitude=float(i),
                longitude=float(2 * i),
                operator="AcmeGas" if i % 2 == 0 else None,
            )
            for i, entry in enumerate(manifest["sites"])
        ]
    )
    registry.to_json(f"{store_dir}/registry.json")
    store = AlertStore(store_dir)
    records = run_pipeline(registry, f"{store_dir}/scenes", RatioThresholdDetector(), store)
    print(f"fixture store ready: {len(records)} pending detections")
    if len(records) < 3:
        raise SystemExit("fixture produced too few detections for the tests")


if __name__ == "__main__":
    main(sys.argv[1])
