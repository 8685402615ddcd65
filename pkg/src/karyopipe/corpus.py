"""Corpus files: spread images, ground-truth sidecars, prediction documents.

A generated corpus is one PNG plus one JSON sidecar per spread and a manifest
listing seeds and parameters. Prediction documents are the pipeline's output
(annotations, ROI chain, stage statuses) keyed to the same stem as the
sidecar, which is how evaluation pairs them.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from PIL import Image

from .cascade import CascadeResult, Detection
from .models import wire
from .storage import canonical_json
from .synthgen import GroundTruth, GroundTruthInstance, SyntheticSpec

__all__ = [
    "save_spread",
    "load_spread_image",
    "load_spread_truth",
    "save_prediction",
    "load_prediction",
    "truth_to_detections",
    "prediction_to_detections",
    "load_truth_dir",
]


def truth_to_json(truth: GroundTruth) -> dict:
    spec = truth.spec
    return {
        "seed": spec.seed,
        "canvas": {"width": spec.canvas_width, "height": spec.canvas_height},
        "background": spec.background,
        "instances": [{
            "id": inst.index,
            "class": inst.class_label,
            "angle_degrees": inst.angle_degrees,
            "centroid": [inst.centroid[0], inst.centroid[1]],
            "bbox": wire.rect_to_json(inst.bbox),
            "mask": wire.rle_encode(inst.mask),
        } for inst in truth.instances],
        "overlap_pairs": [list(p) for p in truth.overlap_pairs],
        "touching_pairs": [list(p) for p in truth.touching_pairs],
        "tags": dict(spec.tags),
    }


def truth_from_json(obj: dict) -> GroundTruth:
    instances = [GroundTruthInstance(
        index=item["id"],
        class_label=item["class"],
        angle_degrees=float(item["angle_degrees"]),
        centroid=(float(item["centroid"][0]), float(item["centroid"][1])),
        bbox=wire.rect_from_json(item["bbox"]),
        mask=wire.rle_decode(item["mask"]),
    ) for item in obj["instances"]]
    spec = SyntheticSpec(
        seed=obj.get("seed", 0),
        canvas_width=obj["canvas"]["width"],
        canvas_height=obj["canvas"]["height"],
        class_labels=tuple(item["class"] for item in obj["instances"]),
        overlap_pairs=len(obj.get("overlap_pairs", [])),
        touching_pairs=len(obj.get("touching_pairs", [])),
        background=obj.get("background", 235),
        tags=tuple(sorted(obj.get("tags", {}).items())),
    )
    return GroundTruth(
        spec=spec, instances=instances,
        overlap_pairs=[tuple(p) for p in obj.get("overlap_pairs", [])],
        touching_pairs=[tuple(p) for p in obj.get("touching_pairs", [])])


def save_spread(out_dir: str | Path, stem: str, image: np.ndarray,
                truth: GroundTruth) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    png_path = out / f"{stem}.png"
    json_path = out / f"{stem}.json"
    Image.fromarray(image, mode="L").save(png_path, format="PNG")
    json_path.write_text(canonical_json(truth_to_json(truth)))
    return png_path, json_path


def load_spread_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.uint8).copy()


def load_spread_truth(path: str | Path) -> GroundTruth:
    return truth_from_json(json.loads(Path(path).read_text()))


def load_truth_dir(truth_dir: str | Path) -> dict[str, GroundTruth]:
    """All sidecars in a directory keyed by stem (manifest excluded)."""
    out: dict[str, GroundTruth] = {}
    for path in sorted(Path(truth_dir).glob("*.json")):
        if path.name == "manifest.json":
            continue
        out[path.stem] = load_spread_truth(path)
    return out


def save_prediction(path: str | Path, result: CascadeResult, image_id: str,
                    canvas: tuple[int, int]) -> None:
    doc = {
        "image_id": image_id,
        "canvas": {"width": canvas[0], "height": canvas[1]},
        "annotations": [wire.annotation_to_json(a) for a in result.annotations],
        "roi_chain": None if result.chain is None else result.chain.to_dict(),
        "stage_statuses": [s.to_dict() for s in result.statuses],
        "state": result.state,
        "error": result.error,
    }
    Path(path).write_text(canonical_json(doc))


def load_prediction(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def truth_to_detections(truth: GroundTruth) -> tuple[list[Detection], list[str], list[float]]:
    dets = [Detection(mask=inst.mask, bbox=inst.bbox, score=1.0)
            for inst in truth.instances]
    classes = [inst.class_label for inst in truth.instances]
    angles = [inst.angle_degrees for inst in truth.instances]
    return dets, classes, angles


def prediction_to_detections(pred: dict) -> tuple[list[Detection], dict[int, str], dict[int, float]]:
    """Rasterized prediction instances plus per-index class and angle maps."""
    width = pred["canvas"]["width"]
    height = pred["canvas"]["height"]
    dets: list[Detection] = []
    classes: dict[int, str] = {}
    angles: dict[int, float] = {}
    for ann_json in pred["annotations"]:
        ann = wire.annotation_from_json(ann_json)
        det = Detection.from_frame_mask(ann.mask(width, height), ann.score)
        if det is None:
            continue
        idx = len(dets)
        dets.append(det)
        classes[idx] = ann.class_label
        angles[idx] = math.degrees(math.atan2(ann.rotation[0], ann.rotation[1]))
    return dets, classes, angles
