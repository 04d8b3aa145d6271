import json

import numpy as np
import pytest
from click.testing import CliRunner

from plumewatch.cli import main
from plumewatch.raster import write_band_stack


@pytest.fixture
def runner():
    return CliRunner()


def _fixture_json(tmp_path, **overrides):
    spec = {"seed": 44, "n_sites": 2, "scenes_per_site": 6, "offshore_fraction": 0.0}
    spec.update(overrides)
    path = tmp_path / "fixture.json"
    path.write_text(json.dumps(spec))
    return path


class TestIngest:
    def test_generate_writes_fixture_and_registry(self, tmp_path, runner):
        fixture = _fixture_json(tmp_path)
        store = tmp_path / "store"
        result = runner.invoke(main, ["--store", str(store), "ingest", "--generate", str(fixture)])
        assert result.exit_code == 0, result.output
        assert (store / "manifest.json").exists()
        assert (store / "registry.json").exists()
        assert len(list((store / "scenes").glob("*.msl"))) == 12

    def test_ingest_without_model_stages_only(self, tmp_path, runner):
        fixture = _fixture_json(tmp_path)
        store = tmp_path / "store"
        result = runner.invoke(main, ["--store", str(store), "ingest", "--generate", str(fixture)])
        assert "not scored" in result.output


class TestSimulate:
    def test_lut_written(self, tmp_path, runner):
        out = tmp_path / "table.lut.json"
        result = runner.invoke(main, ["simulate", "--lut-out", str(out)])
        assert result.exit_code == 0, result.output
        header = json.loads(out.read_text())
        assert header["format"] == "transmittance-lut"
        assert (tmp_path / "table.lut.bin").exists()

    def test_plume_injection_into_scene(self, tmp_path, runner):
        from conftest import make_scene
        from plumewatch.raster import load_scene, save_scene

        scene_path = tmp_path / "scene.msl"
        save_scene(make_scene(np.random.default_rng(0), size=64), scene_path)
        out = tmp_path / "injected.msl"
        result = runner.invoke(
            main, ["simulate", "--scene", str(scene_path), "--flux", "4.0", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        injected = load_scene(out)
        original = load_scene(scene_path)
        assert (injected.band("swir2") <= original.band("swir2") + 1e-6).all()
        assert (injected.band("swir2") < original.band("swir2")).any()


class TestScore:
    def test_score_of_probability_stack(self, tmp_path, runner):
        prob = np.zeros((64, 64), dtype=np.float32)
        prob[10:25, 10:25] = 0.75
        path = tmp_path / "prob.msl"
        write_band_stack(path, {"probability": prob}, {})
        result = runner.invoke(main, ["score", "--prob", str(path), "--k", "100"])
        assert result.exit_code == 0, result.output
        assert float(result.output.strip()) == pytest.approx(0.75)


class TestEvaluate:
    def test_reports_and_plots_written(self, tmp_path, runner):
        rng = np.random.default_rng(5)
        scores = []
        for i in range(60):
            has_plume = i % 3 == 0
            score = float(np.clip(rng.normal(0.7 if has_plume else 0.2, 0.1), 0, 1))
            entry = {"scene_ref": f"s{i}", "score": score, "has_plume": has_plume}
            if has_plume:
                entry["flux_t_per_h"] = float(rng.uniform(0.5, 6.0))
            scores.append(entry)
        scores_path = tmp_path / "scores.json"
        scores_path.write_text(json.dumps(scores))
        out_dir = tmp_path / "eval"
        result = runner.invoke(
            main, ["evaluate", "--scores", str(scores_path), "--out-dir", str(out_dir)]
        )
        assert result.exit_code == 0, result.output
        metrics = json.loads((out_dir / "metrics.json").read_text())
        assert 0.0 <= metrics["average_precision"] <= 1.0
        assert (out_dir / "threshold_sweep.csv").read_text().startswith("threshold,")
        assert (out_dir / "workload_curve.svg").exists()


class TestTimeline:
    def test_unknown_site_fails_cleanly(self, tmp_path, runner):
        fixture = _fixture_json(tmp_path)
        store = tmp_path / "store"
        runner.invoke(main, ["--store", str(store), "ingest", "--generate", str(fixture)])
        result = runner.invoke(main, ["--store", str(store), "timeline", "nope"])
        assert result.exit_code == 1
        assert "unknown site" in result.output

    def test_known_site_prints_timeline(self, tmp_path, runner):
        fixture = _fixture_json(tmp_path)
        store = tmp_path / "store"
        runner.invoke(main, ["--store", str(store), "ingest", "--generate", str(fixture)])
        result = runner.invoke(main, ["--store", str(store), "timeline", "site-0000"])
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert body["site_id"] == "site-0000"
