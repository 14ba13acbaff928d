"""Operator command line for the whole study lifecycle.

Exit codes: 0 success, 2 config error, 3 input error, 4 pipeline error.
Failures print a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import fields
from pathlib import Path
from types import SimpleNamespace

import click
import numpy as np

from . import critmap, qc, simobserver
from .config import StudyConfig
from .errors import (
    AdapterUnavailableError,
    ConfigError,
    DomainError,
    LadderBuildError,
    PipelineError,
    SelectionError,
    SynthesisError,
)
from .eventlog import EventLog, write_events
from .goldgen import GoldSpec, build_gold_ladder, draw_gold_spec, select_gt_centers
from .imaging import (
    Codec,
    ExternalBpgAdapter,
    LadderCache,
    PillowJpegAdapter,
    RasterImage,
    build_ladder,
)

EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_PIPELINE = 4


def _config_epilog() -> str:
    defaults = StudyConfig().to_dict()
    lines = ["Config keys (TOML or JSON; flags override):"]
    for f in fields(StudyConfig):
        lines.append(f"  {f.name} (default: {defaults[f.name]!r})")
    return "\n".join(lines)


def fail(code: int, kind: str, message: str):
    sys.stderr.write(json.dumps({"error": {"type": kind, "message": message}}) + "\n")
    sys.exit(code)


def guarded(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as exc:
            fail(EXIT_CONFIG, "config", str(exc))
        except (FileNotFoundError, AdapterUnavailableError) as exc:
            fail(EXIT_INPUT, "input", str(exc))
        except (DomainError, LadderBuildError, SynthesisError, SelectionError,
                PipelineError) as exc:
            fail(EXIT_PIPELINE, "pipeline", str(exc))
    return wrapper


def load_config(path: str | None) -> StudyConfig:
    return StudyConfig.from_file(path) if path else StudyConfig()


def adapter_for(config: StudyConfig, codec: Codec):
    if codec == Codec.JPEG:
        return PillowJpegAdapter(subsampling=config.jpeg_subsampling)
    return ExternalBpgAdapter(config.bpg_encoder, config.bpg_decoder)


@click.group(epilog=_config_epilog())
def main():
    """Build ladders, synthesize attention checks, run or simulate a study,
    and post-process the collected responses."""


@main.group()
def ladder():
    """Distortion ladder operations."""


@ladder.command("build")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--codec", type=click.Choice(["jpeg", "bpg"]), default="jpeg")
@click.option("--out", "out_dir", type=click.Path(), required=True,
              help="Ladder cache root.")
@click.argument("images", nargs=-1, type=click.Path(exists=True), required=True)
@guarded
def ladder_build(config_path, codec, out_dir, images):
    """Encode each source image at all 100 levels and cache the frames."""
    config = load_config(config_path)
    codec = Codec(codec)
    adapter = adapter_for(config, codec)
    cache = LadderCache(out_dir)
    built = []
    for path in images:
        source = RasterImage.load(path)
        source_id = Path(path).stem
        result = build_ladder(source, codec, adapter, source_id=source_id)
        cache.store(result)
        built.append(source_id)
    click.echo(json.dumps({"built": built, "codec": codec.value, "cache": str(out_dir)}))


@main.group()
def gold():
    """Gold-standard (attention check) operations."""


@gold.command("synth")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--codec", type=click.Choice(["jpeg", "bpg"]), default="jpeg")
@click.option("--seed", type=int, default=0)
@click.option("--pilot", "pilot_path", type=click.Path(exists=True), default=None,
              help="JSON: image_id -> {mean_pjnd, clicks: [[x, y], ...]}.")
@click.option("--cache", "cache_dir", type=click.Path(), default=None,
              help="Also build the gold ladders into this cache.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.argument("images", nargs=-1, type=click.Path(exists=True), required=True)
@guarded
def gold_synth(config_path, codec, seed, pilot_path, cache_dir, out_dir, images):
    """Plant three stronger-distortion regions per source image and write
    one gold spec JSON per image (plus gold ladders with --cache)."""
    config = load_config(config_path)
    codec = Codec(codec)
    rng = np.random.default_rng(seed)
    pilot = json.loads(Path(pilot_path).read_text()) if pilot_path else {}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = LadderCache(cache_dir) if cache_dir else None
    adapter = adapter_for(config, codec) if cache else None
    written = []
    for path in images:
        source = RasterImage.load(path)
        source_id = Path(path).stem
        info = pilot.get(source_id, {})
        if info.get("clicks"):
            clicks = critmap.ClickSet(
                image_id=source_id,
                clicks=[(x, y, "") for x, y in info["clicks"]],
            )
            cmap = critmap.aggregate_clicks_to_map(
                clicks, config.sigma_blur, source.width, source.height
            )
            centers = select_gt_centers(cmap, bandwidth=config.sigma_region)
        else:
            margin = 2 * config.sigma_region
            centers = [
                (float(rng.uniform(margin, source.width - margin)),
                 float(rng.uniform(margin, source.height - margin)))
                for _ in range(3)
            ]
        spec = draw_gold_spec(
            rng, source_id, codec, centers,
            pilot_mean_pjnd=float(info.get("mean_pjnd", 50.0)),
            sigma_region=config.sigma_region,
            sigmoid_scale=config.sigmoid_scale,
            center_spread=config.gold_center_spread,
            lo_prob=config.gold_lo_prob, hi_prob=config.gold_hi_prob,
        )
        spec.seed = seed
        spec.save(out / f"{source_id}.json")
        if cache:
            cache.store(build_gold_ladder(source, codec, adapter, spec))
        written.append(source_id)
    click.echo(json.dumps({"gold_specs": written, "out": str(out)}))


@main.group()
def study():
    """Study setup operations."""


@study.command("init")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--images-dir", type=click.Path(exists=True), required=True)
@click.option("--gold-dir", type=click.Path(exists=True), required=True)
@click.option("--codec", type=click.Choice(["jpeg", "bpg"]), default="jpeg")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@guarded
def study_init(config_path, images_dir, gold_dir, codec, out_dir):
    """Assemble a servable study directory: study.json plus gold specs."""
    config = load_config(config_path)
    out = Path(out_dir)
    (out / "gold").mkdir(parents=True, exist_ok=True)
    image_entries = []
    for path in sorted(Path(images_dir).glob("*.png")):
        im = RasterImage.load(path)
        image_entries.append({
            "image_id": path.stem, "codec": codec,
            "width": im.width, "height": im.height,
        })
    if not image_entries:
        fail(EXIT_INPUT, "input", f"no PNG images in {images_dir}")
    gold_ids = []
    gold_dims = {}
    for path in sorted(Path(gold_dir).glob("*.json")):
        spec = GoldSpec.load(path)
        (out / "gold" / path.name).write_text(path.read_text())
        gold_ids.append(spec.gold_id)
        gold_dims[spec.source_id] = [
            int(max(x for x, _ in spec.centers) + 4 * spec.sigma_region),
            int(max(y for _, y in spec.centers) + 4 * spec.sigma_region),
        ]
    if len(gold_ids) < 15:
        fail(EXIT_INPUT, "input",
             f"need at least 15 gold specs (5 training + 10 quiz), got {len(gold_ids)}")
    study_doc = {
        "images": image_entries,
        "training_gold": gold_ids[:5],
        "quiz_gold": gold_ids[5:15],
        "gold_dims": gold_dims,
        "target_responses": config.target_responses,
        "overshoot": config.overshoot,
        "seed": config.seed,
    }
    (out / "study.json").write_text(json.dumps(study_doc, indent=2, sort_keys=True) + "\n")
    click.echo(json.dumps({"study_dir": str(out), "images": len(image_entries),
                           "gold": len(gold_ids)}))


@main.command()
@click.option("--study-dir", type=click.Path(exists=True), required=True)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--admin-token", default="admin")
@guarded
def serve(study_dir, host, port, admin_token):
    """Run the study HTTP server."""
    import uvicorn

    from .server import create_app

    uvicorn.run(create_app(study_dir, admin_token=admin_token),
                host=host, port=port, log_level="warning")


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--scenario", "scenario_path", type=click.Path(exists=True), default=None,
              help="Reuse an existing scenario JSON instead of generating one.")
@click.option("--n-images", type=int, default=300)
@click.option("--n-observers", type=int, default=150)
@click.option("--spammer-fraction", type=float, default=0.10)
@click.option("--marginal-fraction", type=float, default=0.10)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@guarded
def simulate(config_path, scenario_path, n_images, n_observers, spammer_fraction,
             marginal_fraction, seed, out_dir):
    """Run a whole synthetic-observer study and write a replayable log."""
    config = load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if scenario_path:
        scenario = simobserver.GroundTruthScenario.load(scenario_path)
    else:
        scenario = simobserver.make_scenario(
            n_images=n_images, n_observers=n_observers, seed=seed,
            spammer_fraction=spammer_fraction, marginal_fraction=marginal_fraction,
        )
    scenario.save(out / "scenario.json")

    rng = np.random.default_rng(seed + 1)
    gold_specs = []
    gold_dir = out / "gold"
    gold_dir.mkdir(exist_ok=True)
    for i in range(25):
        margin = 2 * config.sigma_region
        centers = [
            (float(rng.uniform(margin, 256 - margin)),
             float(rng.uniform(margin, 256 - margin)))
            for _ in range(3)
        ]
        spec = draw_gold_spec(
            rng, f"goldsrc{i:02d}", Codec.JPEG, centers,
            pilot_mean_pjnd=float(rng.uniform(30, 70)),
            sigma_region=config.sigma_region,
            sigmoid_scale=config.sigmoid_scale,
        )
        spec.seed = seed
        spec.save(gold_dir / f"{spec.source_id}.json")
        gold_specs.append(spec)

    result = simobserver.run_simulated_study(
        scenario, gold_specs, seed=seed,
        target_responses=config.target_responses, overshoot=config.overshoot,
    )
    write_events(out / "log.jsonl", result.events)
    (out / "workers.json").write_text(json.dumps(
        {w: rec.state.value for w, rec in sorted(result.workers.items())},
        indent=2, sort_keys=True) + "\n")
    (out / "images.json").write_text(json.dumps(
        {
            im.image_id: {"width": im.width, "height": im.height,
                          "codec": im.codec, "true_level": im.true_level}
            for im in scenario.images
        }, indent=2, sort_keys=True) + "\n")
    summary = {
        "n_events": len(result.events),
        "n_responses": sum(1 for e in result.events if e.get("type") == "response"),
        "n_workers": len(result.workers),
        "spammer_rejection_rate": result.spammer_rejection_rate(scenario),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    click.echo(json.dumps(summary))


def _load_log(log_path):
    events = EventLog.read(log_path)
    if not events:
        fail(EXIT_INPUT, "input", f"empty or missing log: {log_path}")
    return events


@main.group(name="qc")
def qc_group():
    """Quality-control pipeline operations."""


@qc_group.command("run")
@click.option("--log", "log_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@guarded
def qc_run(log_path, out_path):
    """Run the three filter stages and print the removal accounting."""
    events = _load_log(log_path)
    rejected = qc.rejected_workers_from_events(events)
    _, report = qc.run_qc(events, rejected)
    doc = report.to_dict()
    if out_path:
        Path(out_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    click.echo(json.dumps(doc))


def _aggregate_from_log(log_path, images_path, build_maps: bool,
                        sigma_blur: float):
    events = _load_log(log_path)
    images = json.loads(Path(images_path).read_text())
    rejected = qc.rejected_workers_from_events(events)
    responses, report = qc.run_qc(events, rejected)
    annotations = qc.aggregate(
        responses,
        image_dims={i: (v["width"], v["height"]) for i, v in images.items()},
        sigma_blur=sigma_blur,
        codec_by_image={i: v["codec"] for i, v in images.items()},
        build_maps=build_maps,
    )
    return annotations, report


@main.command()
@click.option("--log", "log_path", type=click.Path(exists=True), required=True)
@click.option("--images", "images_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@guarded
def analyze(log_path, images_path, config_path, out_path):
    """Aggregate surviving responses into per-image statistics."""
    config = load_config(config_path)
    annotations, report = _aggregate_from_log(
        log_path, images_path, build_maps=False, sigma_blur=config.sigma_blur
    )
    doc = {
        "qc": report.to_dict(),
        "images": [
            {
                "image_id": a.image_id, "codec": a.codec,
                "n_samples": len(a.pjnd_samples),
                "mean_pjnd": a.mean_pjnd, "std_pjnd": a.std_pjnd,
                "n_clicks": len(a.clicks.clicks),
            }
            for a in annotations
        ],
    }
    Path(out_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    click.echo(json.dumps({"images": len(annotations), "out": out_path}))


@main.command()
@click.option("--log", "log_path", type=click.Path(exists=True), required=True)
@click.option("--images", "images_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@guarded
def export(log_path, images_path, config_path, out_dir):
    """Run QC, aggregate, and write the dataset (records, maps, manifest)."""
    config = load_config(config_path)
    annotations, report = _aggregate_from_log(
        log_path, images_path, build_maps=True, sigma_blur=config.sigma_blur
    )
    out = Path(out_dir)
    manifest = qc.export_dataset(annotations, out / "dataset")
    (out / "qc_report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    click.echo(json.dumps(manifest))


@main.command()
@click.option("--export", "export_dir", type=click.Path(exists=True), required=True,
              help="A dataset directory produced by the export command.")
@click.option("--reference", "reference_path", type=click.Path(exists=True),
              required=True, help="JSON: image_id -> reference mean level.")
@click.option("--codec", type=click.Choice(["jpeg", "bpg"]), default="jpeg")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@guarded
def compare(export_dir, reference_path, codec, out_dir):
    """Cross-dataset consistency report (rank correlation + regression)."""
    records = []
    for path in sorted((Path(export_dir) / "images").glob("*.json")):
        data = json.loads(path.read_text())
        records.append(SimpleNamespace(
            image_id=data["image_id"], codec=data["codec"],
            mean_pjnd=data["mean_pjnd"],
        ))
    if not records:
        fail(EXIT_INPUT, "input", f"no image records under {export_dir}")
    reference = json.loads(Path(reference_path).read_text())
    report = qc.compare_datasets(records, reference, codec)
    if out_dir:
        reports = Path(out_dir)
        reports.mkdir(parents=True, exist_ok=True)
        (reports / f"comparison_{codec}.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n"
        )
    click.echo(json.dumps({k: v for k, v in report.items() if k != "scatter"}))


if __name__ == "__main__":
    main()
