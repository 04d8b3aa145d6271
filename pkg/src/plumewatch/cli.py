"""Command-line interface.

Subcommands: ingest, simulate, train, predict, score, evaluate, serve,
timeline. Global options pick the store directory, a config file and the
random seed. ``ingest`` doubles as the pipeline run: with ``--model`` it
scores newly discovered scenes and persists alerts (optionally looping at an
interval); with ``--generate`` it writes a synthetic fixture tree first.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import fixtures as fx
from .analysis import scene_score
from .detector import PlumeDetector
from .errors import PlumewatchError
from .evaluation import (
    ScoredScene,
    average_precision,
    confusion_metrics,
    fit_pod,
    workload_curve,
    write_metrics_json,
    write_threshold_sweep_csv,
)
from .inputs import assemble_input
from .raster import load_scene, read_band_stack, save_scene, write_band_stack
from .retrieval import mbmp
from .service.pipeline import PipelineConfig, run_pipeline
from .service.registry import SiteRecord, SiteRegistry
from .service.store import AlertStore
from .spectra import build_toy_lut, save_lut


@click.group()
@click.option("--store", "store_dir", type=click.Path(), default="./store", show_default=True,
              help="Alert store directory.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Pipeline config JSON.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def main(ctx, store_dir, config_path, seed):
    ctx.ensure_object(dict)
    ctx.obj["store_dir"] = Path(store_dir)
    ctx.obj["seed"] = seed
    ctx.obj["config"] = (
        PipelineConfig.from_json(config_path) if config_path else PipelineConfig()
    )


def _registry_for(store_dir: Path) -> SiteRegistry:
    path = store_dir / "registry.json"
    if path.exists():
        return SiteRegistry.from_json(path)
    return SiteRegistry([])


def _registry_from_fixture(manifest: dict) -> list[SiteRecord]:
    sites = []
    for i, entry in enumerate(manifest["sites"]):
        sites.append(
            SiteRecord(
                site_id=entry["site_id"],
                name=f"Fixture site {i}",
                country="Fixtureland",
                latitude=float(np.clip(-60 + i * 2.7, -89, 89)),
                longitude=float(((i * 13.7) % 360) - 180),
                facility_type="synthetic",
                offshore=bool(entry.get("offshore", False)),
            )
        )
    return sites


@main.command()
@click.option("--scenes", "scenes_dir", type=click.Path(), default=None,
              help="Directory of band-stack scenes to ingest (default: <store>/scenes).")
@click.option("--generate", "fixture_json", type=click.Path(exists=True), default=None,
              help="Write a synthetic fixture described by this JSON first.")
@click.option("--model", "model_path", type=click.Path(exists=True), default=None,
              help="Detector model file; enables the detection pipeline.")
@click.option("--interval", type=float, default=None,
              help="Loop, rescanning every INTERVAL seconds.")
@click.pass_context
def ingest(ctx, scenes_dir, fixture_json, model_path, interval):
    """Discover new scenes (and/or generate fixtures), run the pipeline."""
    store_dir = ctx.obj["store_dir"]
    store_dir.mkdir(parents=True, exist_ok=True)
    scenes_dir = Path(scenes_dir) if scenes_dir else store_dir / "scenes"

    if fixture_json:
        raw = json.loads(Path(fixture_json).read_text())
        if "flux_bounds_t_per_h" in raw:
            raw["flux_bounds_t_per_h"] = tuple(raw["flux_bounds_t_per_h"])
        config = fx.FixtureConfig(**raw)
        manifest = fx.write_fixture(config, store_dir)
        SiteRegistry(_registry_from_fixture(manifest)).to_json(store_dir / "registry.json")
        click.echo(f"fixture written: {config.n_sites} sites under {store_dir}")
        scenes_dir = store_dir / "scenes"

    if model_path is None:
        click.echo("no --model given; scenes staged but not scored")
        return

    detector = PlumeDetector.load(model_path)
    registry = _registry_for(store_dir)
    store = AlertStore(store_dir)
    while True:
        records = run_pipeline(registry, scenes_dir, detector, store, ctx.obj["config"])
        click.echo(f"pipeline pass: {len(records)} new detections")
        for rec in records:
            click.echo(f"  {rec.detection_id} score={rec.scene_score:.3f} flux={rec.flux_t_per_h:.2f} t/h")
        if interval is None:
            break
        time.sleep(interval)


@main.command()
@click.option("--lut-out", type=click.Path(), default=None, help="Write the transmittance LUT here.")
@click.option("--scene", "scene_path", type=click.Path(exists=True), default=None)
@click.option("--flux", type=float, default=3.0, show_default=True, help="Injected flux, t/h.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Injected scene output.")
@click.pass_context
def simulate(ctx, lut_out, scene_path, flux, out_path):
    """Build the transmittance LUT and/or inject a demo plume into a scene."""
    lut = build_toy_lut()
    if lut_out:
        save_lut(lut, lut_out)
        click.echo(f"LUT written to {lut_out}")
    if scene_path:
        if not out_path:
            raise click.UsageError("--out is required with --scene")
        scene = load_scene(scene_path)
        rng = np.random.default_rng(ctx.obj["seed"])
        label = fx.make_plume_label(
            rng, scene.cloud_mask.shape, scene.wind_u, scene.wind_v, flux
        )
        injected = fx.simulate_plume_scene(scene, label, lut, fx._default_ctx())
        save_scene(injected, out_path)
        write_band_stack(
            Path(out_path).with_suffix(".label.msl"),
            {"mask": label.mask.astype(np.uint8), "delta_ch4": label.delta_ch4},
            {"flux_t_per_h": flux},
        )
        click.echo(f"injected {flux} t/h plume -> {out_path}")


@main.command()
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True,
              help="Fixture tree from `ingest --generate`.")
@click.option("--out", "model_out", type=click.Path(), required=True)
@click.option("--epochs", type=int, default=12, show_default=True)
@click.option("--steps", type=int, default=40, show_default=True)
@click.option("--batch", type=int, default=6, show_default=True)
@click.option("--width", type=int, default=8, show_default=True)
@click.option("--depth", type=int, default=3, show_default=True)
@click.option("--lr", type=float, default=5e-4, show_default=True)
@click.option("--weight-decay", type=float, default=1e-6, show_default=True)
@click.option("--patience", type=int, default=4, show_default=True)
@click.option("--val-fraction", type=float, default=0.2, show_default=True)
@click.pass_context
def train(ctx, data_dir, model_out, epochs, steps, batch, width, depth, lr,
          weight_decay, patience, val_fraction):
    """Train the detector on a fixture tree."""
    from .benchmark import build_training_setup

    sites = fx.load_fixture(data_dir)
    setup = build_training_setup(sites, val_fraction=val_fraction, seed=ctx.obj["seed"])
    detector = PlumeDetector(
        depth=depth, base_width=width, learning_rate=lr, weight_decay=weight_decay,
        batch_size=batch, steps_per_epoch=steps, max_epochs=epochs,
        patience=patience, seed=ctx.obj["seed"],
    )
    detector.fit(setup.sampler, validation=setup.validation)
    detector.save(model_out)
    ap = detector.best_val_ap_
    click.echo(f"model written to {model_out} (val AP {'n/a' if ap is None else f'{ap:.3f}'})")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--scene", "scene_path", type=click.Path(exists=True), required=True)
@click.option("--reference", "reference_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the probability map (band stack).")
@click.pass_context
def predict(ctx, model_path, scene_path, reference_path, out_path):
    """Probability map and scene score for one scene/reference pair."""
    detector = PlumeDetector.load(model_path)
    scene = load_scene(scene_path)
    reference = load_scene(reference_path)
    retrieval = mbmp(scene, reference)
    prob = detector.predict_proba(assemble_input(scene, reference, retrieval))
    score = scene_score(prob)
    click.echo(f"scene score: {score:.4f}")
    if out_path:
        write_band_stack(out_path, {"probability": prob.astype(np.float32)},
                         {"scene": str(scene_path), "score": score})
        click.echo(f"probability map -> {out_path}")


@main.command()
@click.option("--prob", "prob_path", type=click.Path(exists=True), required=True,
              help="Probability-map band stack.")
@click.option("--k", type=int, default=100, show_default=True)
def score(prob_path, k):
    """Scene score of a stored probability map."""
    planes, _ = read_band_stack(prob_path)
    value = scene_score(planes["probability"].astype(np.float64), k=k)
    click.echo(f"{value:.6f}")


@main.command()
@click.option("--scores", "scores_json", type=click.Path(exists=True), required=True,
              help="JSON list of {scene_ref, score, has_plume, flux_t_per_h?}.")
@click.option("--out-dir", type=click.Path(), default="./evaluation", show_default=True)
@click.option("--thresholds", default="0.5,0.9,0.98", show_default=True)
def evaluate(scores_json, out_dir, thresholds):
    """Scene-level metrics, threshold sweep CSV, SVG plots, optional PoD fit."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    raw = json.loads(Path(scores_json).read_text())
    scenes = [
        ScoredScene(
            scene_ref=e["scene_ref"], score=e["score"], has_plume=e["has_plume"],
            flux_t_per_h=e.get("flux_t_per_h"),
        )
        for e in raw
    ]
    t_list = [float(t) for t in thresholds.split(",")]
    metrics = {
        "n_scenes": len(scenes),
        "average_precision": average_precision(scenes),
        "at_threshold": {str(t): confusion_metrics(scenes, t) for t in t_list},
        "workload": workload_curve(scenes),
    }
    pod = None
    flagged = [s for s in scenes if s.has_plume and s.flux_t_per_h is not None]
    if len(flagged) >= 10:
        try:
            pod = fit_pod([(s.flux_t_per_h, s.score >= 0.5) for s in flagged])
            metrics["pod"] = {"q50": pod.q50, "s": pod.s, "q90": pod.q90}
        except PlumewatchError as exc:
            metrics["pod"] = f"not fitted: {exc}"
    write_metrics_json(out_dir / "metrics.json", metrics)
    write_threshold_sweep_csv(out_dir / "threshold_sweep.csv", scenes, t_list)
    _plots(out_dir, scenes, pod)
    click.echo(f"evaluation written to {out_dir}")


def _plots(out_dir: Path, scenes, pod) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    wl = workload_curve(scenes)
    xs = [p[0] for p in wl["curve"]]
    ys = [p[1] for p in wl["curve"]]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(xs, ys, label="by model score")
    if wl["n_positives"]:
        ax.plot([0, len(xs)], [0, wl["n_positives"]], "--", label="random order")
    ax.set_xlabel("images reviewed")
    ax.set_ylabel("plumes found")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_dir / "workload_curve.svg")
    plt.close(fig)

    if pod is not None:
        q = np.linspace(0, max(s.flux_t_per_h or 0 for s in scenes) * 1.1 + 1e-9, 200)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(q, pod.probability(q))
        ax.axhline(0.9, ls=":", c="gray")
        ax.axvline(pod.q90, ls=":", c="gray")
        ax.set_xlabel("flux (t/h)")
        ax.set_ylabel("probability of detection")
        ax.set_title(f"q90 = {pod.q90:.2f} t/h")
        fig.tight_layout()
        fig.savefig(out_dir / "pod_curve.svg")
        plt.close(fig)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8844, show_default=True)
@click.pass_context
def serve(ctx, host, port):
    """Run the alert review HTTP API."""
    import uvicorn

    from .service.api import create_app

    store_dir = ctx.obj["store_dir"]
    store = AlertStore(store_dir)
    registry = _registry_for(store_dir)
    app = create_app(store, registry, store_dir / "scenes")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.argument("site_id")
@click.pass_context
def timeline(ctx, site_id):
    """Print a site's confirmed detections and coverage dates."""
    store = AlertStore(ctx.obj["store_dir"])
    registry = _registry_for(ctx.obj["store_dir"])
    if site_id not in registry:
        click.echo(f"unknown site {site_id!r}", err=True)
        sys.exit(1)
    tl = store.site_timeline(site_id)
    click.echo(json.dumps(tl, indent=2))


if __name__ == "__main__":
    main()
