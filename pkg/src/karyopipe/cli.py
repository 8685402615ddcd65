"""Desk-scale command line: corpus generation, pipeline runs, services, evaluation.

Subcommands: generate, run, serve, evaluate, report. Every command is
deterministic given its arguments, the seed, and the corpus.
"""

from __future__ import annotations

import json
import sys
import threading
from pathlib import Path

import click

from .backend.app import make_backend_app
from .backend.ingest import decode_image
from .backend.karyogram import compose_karyogram, render_karyogram_png
from .cascade import run_cascade
from .config import AppConfig, load_config
from .corpus import (
    load_prediction,
    load_spread_truth,
    load_truth_dir,
    prediction_to_detections,
    save_prediction,
    save_spread,
    truth_to_detections,
)
from .errors import DimensionMismatch
from .evalstats import SpreadEval, accuracy_counts, build_report, match_instances, render_report_text
from .models.clients import RemoteBackends
from .models.oracle import OracleBackends, OracleNoise
from .models.services import make_model_app, make_orchestrator_status_app
from .models.stubs import STUB_MODEL_VERSION, StubBackends
from .orchestrator import PipelineConfig, worker_loop
from .storage import Store, canonical_json
from .synthgen import SyntheticSpec, generate_spread

SERVE_ROLES = ("backend", "orchestrator", "semseg", "instances", "dedup",
               "classify", "oracle")


@click.group()
def main():
    """Karyotyping pipeline toolkit."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--count", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--canvas", default="1830x1830", show_default=True,
              help="WIDTHxHEIGHT of each spread")
@click.option("--overlap-pairs", default=0, show_default=True)
@click.option("--touching-pairs", default=0, show_default=True)
@click.option("--border-adjacent", is_flag=True)
@click.option("--cycle-tag", default=None,
              help="key=v1,v2,... cycles tag values across spreads")
def generate(out_dir, count, seed, canvas, overlap_pairs, touching_pairs,
             border_adjacent, cycle_tag):
    """Emit COUNT spread PNGs plus ground-truth sidecars and a manifest."""
    width, height = (int(v) for v in canvas.lower().split("x"))
    tag_key, tag_values = None, []
    if cycle_tag:
        tag_key, joined = cycle_tag.split("=", 1)
        tag_values = joined.split(",")
    entries = []
    for i in range(count):
        spread_seed = seed + i
        tags = ()
        if tag_key:
            tags = ((tag_key, tag_values[i % len(tag_values)]),)
        spec = SyntheticSpec(seed=spread_seed, canvas_width=width,
                             canvas_height=height, overlap_pairs=overlap_pairs,
                             touching_pairs=touching_pairs,
                             border_adjacent=border_adjacent, tags=tags)
        image, truth = generate_spread(spec)
        stem = f"spread_{i:04d}"
        save_spread(out_dir, stem, image, truth)
        entries.append({"stem": stem, "seed": spread_seed, "tags": dict(tags)})
    manifest = {
        "count": count,
        "seed": seed,
        "canvas": {"width": width, "height": height},
        "overlap_pairs": overlap_pairs,
        "touching_pairs": touching_pairs,
        "border_adjacent": border_adjacent,
        "spreads": entries,
    }
    Path(out_dir, "manifest.json").write_text(canonical_json(manifest))
    click.echo(f"wrote {count} spreads to {out_dir}")


def _build_backends(kind: str, config: AppConfig, truth_dir: str | None):
    if kind == "stubs":
        return StubBackends(seed=config.seed, canvas_dim=config.cascade.semseg_canvas)
    if kind == "oracle":
        directory = truth_dir or config.truth_dir
        if not directory:
            raise click.UsageError("oracle backends need --truth-dir (or config truth_dir)")
        noise = OracleNoise(iou_degrade=float(config.noise.get("iou_degrade", 0.0)),
                            misclass_rate=float(config.noise.get("misclass_rate", 0.0)),
                            seed=config.seed)
        oracle = OracleBackends(noise=noise)
        for stem, truth in load_truth_dir(directory).items():
            oracle.register(stem, truth)
        return oracle
    if kind == "urls":
        missing = [k for k in ("semseg", "instance", "dedup", "classify")
                   if k not in config.endpoints]
        if missing:
            raise click.UsageError(f"config endpoints missing: {missing}")
        return RemoteBackends(config.endpoints, timeout_ms=config.timeout_ms)
    raise click.UsageError(f"unknown backends kind {kind!r}")


@main.command()
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--backends", "backends_kind", default="stubs", show_default=True,
              type=click.Choice(["stubs", "oracle", "urls"]))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--truth-dir", default=None, type=click.Path(exists=True),
              help="ground-truth sidecar directory (oracle backends)")
@click.option("--karyogram/--no-karyogram", default=True, show_default=True)
def run(image_path, backends_kind, out_dir, config_path, truth_dir, karyogram):
    """Run the full cascade on one image (or every PNG in a directory).

    Writes an annotation document per image; exits nonzero when any run fails
    outright (no-foreground images included).
    """
    config = load_config(config_path)
    backends = _build_backends(backends_kind, config, truth_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    source = Path(image_path)
    images = sorted(source.glob("*.png")) if source.is_dir() else [source]
    if not images:
        raise click.UsageError(f"no PNG images under {source}")
    failed = 0
    for path in images:
        pixels = decode_image(path.read_bytes())
        image_id = path.stem
        result = run_cascade(pixels, config.cascade, backends,
                             image_id=image_id, retries=config.retries)
        save_prediction(out / f"{image_id}.json", result, image_id,
                        (pixels.shape[1], pixels.shape[0]))
        if result.state == "Failed":
            failed += 1
            click.echo(f"{image_id}: Failed ({result.error})", err=True)
            continue
        if karyogram:
            anns = json.loads((out / f"{image_id}.json").read_text())["annotations"]
            layout = compose_karyogram(anns, pixels)
            (out / f"{image_id}.karyogram.png").write_bytes(render_karyogram_png(layout))
        click.echo(f"{image_id}: {result.state} "
                   f"({len(result.annotations)} annotations)")
    sys.exit(1 if failed else 0)


@main.command()
@click.argument("role", type=click.Choice(SERVE_ROLES))
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--truth-dir", default=None, type=click.Path(exists=True))
@click.option("--workers", "worker_count", default=1, show_default=True,
              help="worker threads (orchestrator role)")
def serve(role, port, host, config_path, truth_dir, worker_count):
    """Start one service role and block until interrupted."""
    import uvicorn

    config = load_config(config_path)
    if role == "backend":
        store = Store(config.db_path)
        for token, tenant in config.tokens.items():
            store.add_tenant(tenant, tenant, token=token)
        app = make_backend_app(store)
    elif role == "orchestrator":
        store = Store(config.db_path)
        backends = RemoteBackends(config.endpoints, timeout_ms=config.timeout_ms)
        pipeline = PipelineConfig(endpoints=config.endpoints,
                                  timeout_ms=config.timeout_ms,
                                  retries=config.retries,
                                  cascade=config.cascade,
                                  lease_seconds=config.lease_seconds,
                                  seed=config.seed)
        stop = threading.Event()
        for k in range(worker_count):
            threading.Thread(target=worker_loop,
                             args=(store, backends, pipeline),
                             kwargs={"stop_event": stop, "worker_id": f"w{k}"},
                             daemon=True).start()
        app = make_orchestrator_status_app(store)
    elif role == "oracle":
        backends = _build_backends("oracle", config, truth_dir)
        app = make_model_app(backends, "oracle", "ground-truth-oracle/1")
    else:
        stub = StubBackends(seed=config.seed,
                            canvas_dim=config.cascade.semseg_canvas)
        endpoint = {"semseg": ("semseg",), "instances": ("instances",),
                    "dedup": ("dedup",), "classify": ("classify",)}[role]
        app = make_model_app(stub, role, STUB_MODEL_VERSION, endpoints=endpoint)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--pred", "pred_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--gt", "gt_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False))
@click.option("--system-name", default="pipeline", show_default=True)
@click.option("--facet", "facet_keys", multiple=True)
@click.option("--iou-thresh", default=0.5, show_default=True)
@click.option("--rot-tol-deg", default=15.0, show_default=True)
@click.option("--min-segmentation-pct", default=None, type=float,
              help="quality gate on the correct-segmentation percentage")
@click.option("--min-class-recall-pct", default=None, type=float,
              help="quality gate on every per-class recall")
def evaluate(pred_dir, gt_dir, out_path, system_name, facet_keys, iou_thresh,
             rot_tol_deg, min_segmentation_pct, min_class_recall_pct):
    """Score predictions against ground-truth sidecars; exit per quality gates."""
    gt_paths = {p.stem: p for p in sorted(Path(gt_dir).glob("*.json"))
                if p.name != "manifest.json"}
    if not gt_paths:
        raise click.UsageError(f"no sidecars under {gt_dir}")
    missing = [stem for stem in gt_paths if not (Path(pred_dir) / f"{stem}.json").exists()]
    if missing:
        for stem in missing:
            click.echo(f"missing prediction for {stem}", err=True)
        sys.exit(2)

    spreads = []
    per_spread = {}
    for stem, gt_path in gt_paths.items():
        truth = load_spread_truth(gt_path)
        pred = load_prediction(Path(pred_dir) / f"{stem}.json")
        gt_dets, gt_classes, gt_angles = truth_to_detections(truth)
        pred_dets, pred_classes, pred_angles = prediction_to_detections(pred)
        try:
            outcomes = match_instances(
                pred_dets, gt_dets, iou_thresh=iou_thresh,
                pred_canvas=(pred["canvas"]["width"], pred["canvas"]["height"]),
                gt_canvas=(truth.spec.canvas_width, truth.spec.canvas_height))
        except DimensionMismatch as exc:
            click.echo(f"{stem}: {exc}", err=True)
            sys.exit(2)
        counts = accuracy_counts(outcomes, pred_classes, gt_classes,
                                 pred_angles, gt_angles, rot_tol_deg=rot_tol_deg)
        spreads.append(SpreadEval(spread_id=stem, counts=counts,
                                  tags=dict(truth.spec.tags)))
        per_spread[stem] = {
            "segmentation_correct": counts.segmentation_correct,
            "merged": counts.segmentation_merged,
            "missed": counts.segmentation_missed,
            "classification_correct": counts.classification_correct,
            "rotation_correct": counts.rotation_correct,
            "total": counts.total,
        }

    report = build_report({system_name: spreads}, facet_keys=tuple(facet_keys),
                          iou_thresh=iou_thresh, rot_tol_deg=rot_tol_deg)
    report["per_spread"] = {system_name: per_spread}
    text = render_report_text(report)
    click.echo(text)
    if out_path:
        Path(out_path).write_text(canonical_json(report))
        Path(out_path).with_suffix(".txt").write_text(text)

    block = report["systems"][system_name]
    failures = []
    if min_segmentation_pct is not None and \
            block["segmentation"]["correct_pct"] < min_segmentation_pct:
        failures.append(
            f"segmentation {block['segmentation']['correct_pct']} < {min_segmentation_pct}")
    if min_class_recall_pct is not None:
        for label, entry in block["per_class"].items():
            if entry["correct_pct"] < min_class_recall_pct:
                failures.append(
                    f"class {label} recall {entry['correct_pct']} < {min_class_recall_pct}")
    for failure in failures:
        click.echo(f"gate failed: {failure}", err=True)
    sys.exit(1 if failures else 0)


@main.command()
@click.argument("report_path", type=click.Path(exists=True, dir_okay=False))
def report(report_path):
    """Render a stored evaluation report as aligned text tables."""
    click.echo(render_report_text(json.loads(Path(report_path).read_text())))


if __name__ == "__main__":
    main()
