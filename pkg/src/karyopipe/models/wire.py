"""JSON wire formats for the model-service contracts.

Masks travel as run-length encodings over row-major pixel order; rasters as
zlib-compressed base64. Every encode/decode pair round-trips bit-exactly, so
in-process and HTTP backends produce identical results.

Binary mask RLE: ``{"size": [h, w], "counts": [c0, c1, ...]}`` where counts
alternate runs of background and foreground, starting with background (the
first count may be 0).

Class-array RLE: ``{"size": [h, w], "values": [...], "counts": [...]}`` with
one explicit value per run.
"""

from __future__ import annotations

import base64
import zlib

import numpy as np

from ..cascade import (
    Annotation,
    ClassifyResult,
    Detection,
    InstanceFrame,
    RoiChain,
    SemsegFrame,
    SemsegResult,
)
from ..imaging import AffineTransform, Rect

__all__ = [
    "rle_encode", "rle_decode",
    "class_rle_encode", "class_rle_decode",
    "raster_encode", "raster_decode",
    "rect_to_json", "rect_from_json",
    "transform_to_json", "transform_from_json",
    "detection_to_json", "detection_from_json",
    "annotation_to_json", "annotation_from_json",
    "roi_chain_to_json", "roi_chain_from_json",
    "semseg_request_to_json", "semseg_request_from_json",
    "semseg_response_to_json", "semseg_response_from_json",
    "instances_request_to_json", "instances_request_from_json",
    "instances_response_to_json", "instances_response_from_json",
    "dedup_request_to_json", "dedup_request_from_json",
    "dedup_response_to_json", "dedup_response_from_json",
    "classify_request_to_json", "classify_request_from_json",
    "classify_response_to_json", "classify_response_from_json",
]


def _run_lengths(flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(values, counts) of consecutive runs in a 1-D array."""
    if flat.size == 0:
        return np.array([], dtype=flat.dtype), np.array([], dtype=np.int64)
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [flat.size]])
    return flat[starts], ends - starts


def rle_encode(mask: np.ndarray) -> dict:
    m = np.asarray(mask, dtype=bool)
    values, counts = _run_lengths(m.ravel())
    counts = counts.tolist()
    if values.size and values[0]:
        counts = [0] + counts
    return {"size": [int(m.shape[0]), int(m.shape[1])], "counts": counts}


def rle_decode(obj: dict) -> np.ndarray:
    h, w = obj["size"]
    counts = obj["counts"]
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for count in counts:
        if value:
            flat[pos:pos + count] = True
        pos += count
        value = not value
    if pos != h * w:
        raise ValueError(f"RLE counts sum to {pos}, expected {h * w}")
    return flat.reshape(h, w)


def class_rle_encode(classes: np.ndarray) -> dict:
    arr = np.asarray(classes)
    values, counts = _run_lengths(arr.ravel())
    return {"size": [int(arr.shape[0]), int(arr.shape[1])],
            "values": [int(v) for v in values],
            "counts": [int(c) for c in counts]}


def class_rle_decode(obj: dict) -> np.ndarray:
    h, w = obj["size"]
    flat = np.zeros(h * w, dtype=np.uint8)
    pos = 0
    for value, count in zip(obj["values"], obj["counts"]):
        flat[pos:pos + count] = value
        pos += count
    if pos != h * w:
        raise ValueError(f"class RLE counts sum to {pos}, expected {h * w}")
    return flat.reshape(h, w)


def raster_encode(image: np.ndarray) -> dict:
    img = np.ascontiguousarray(image, dtype=np.uint8)
    data = base64.b64encode(zlib.compress(img.tobytes())).decode("ascii")
    return {"size": [int(img.shape[0]), int(img.shape[1])],
            "encoding": "zlib+b64", "data": data}


def raster_decode(obj: dict) -> np.ndarray:
    h, w = obj["size"]
    raw = zlib.decompress(base64.b64decode(obj["data"]))
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w).copy()


def rect_to_json(rect: Rect) -> list[int]:
    return [rect.x0, rect.y0, rect.w, rect.h]


def rect_from_json(obj: list) -> Rect:
    return Rect(*[int(v) for v in obj])


def transform_to_json(t: AffineTransform | None) -> list | None:
    return None if t is None else [[float(v) for v in row] for row in t.matrix]


def transform_from_json(obj: list | None) -> AffineTransform | None:
    return None if obj is None else AffineTransform(np.array(obj, dtype=np.float64))


def detection_to_json(det: Detection) -> dict:
    return {"mask": rle_encode(det.mask), "bbox": rect_to_json(det.bbox),
            "score": float(det.score)}


def detection_from_json(obj: dict) -> Detection:
    return Detection(mask=rle_decode(obj["mask"]), bbox=rect_from_json(obj["bbox"]),
                     score=float(obj["score"]))


def annotation_to_json(ann: Annotation) -> dict:
    return {
        "id": ann.id,
        "polygon": [[int(x), int(y)] for x, y in ann.polygon],
        "class": ann.class_label,
        "probs": [float(p) for p in ann.class_probs],
        "rotation": {"sin": float(ann.rotation[0]), "cos": float(ann.rotation[1])},
        "score": float(ann.score),
    }


def annotation_from_json(obj: dict) -> Annotation:
    return Annotation(
        polygon=np.array(obj["polygon"], dtype=np.int64),
        class_label=obj["class"],
        class_probs=[float(p) for p in obj["probs"]],
        rotation=(float(obj["rotation"]["sin"]), float(obj["rotation"]["cos"])),
        score=float(obj["score"]),
        id=obj.get("id"),
    )


def roi_chain_to_json(chain: RoiChain) -> dict:
    return chain.to_dict()


def roi_chain_from_json(obj: dict) -> RoiChain:
    return RoiChain.from_dict(obj)


# --- request / response bodies -------------------------------------------------

def semseg_request_to_json(image: np.ndarray, image_id: str, frame: SemsegFrame) -> dict:
    return {"image_id": image_id, "image": raster_encode(image),
            "frame": {"crop1": rect_to_json(frame.crop1), "scale": float(frame.scale)}}


def semseg_request_from_json(obj: dict) -> tuple[np.ndarray, str, SemsegFrame]:
    frame = SemsegFrame(crop1=rect_from_json(obj["frame"]["crop1"]),
                        scale=float(obj["frame"]["scale"]))
    return raster_decode(obj["image"]), obj["image_id"], frame


def semseg_response_to_json(result: SemsegResult, image_id: str) -> dict:
    return {"image_id": image_id, "mask": class_rle_encode(result.classes),
            "model_version": result.model_version, "warning": result.warning}


def semseg_response_from_json(obj: dict) -> SemsegResult:
    return SemsegResult(classes=class_rle_decode(obj["mask"]),
                        model_version=obj["model_version"],
                        warning=obj.get("warning"))


def instances_request_to_json(image: np.ndarray, image_id: str, angle_tag: int,
                              frame: InstanceFrame) -> dict:
    return {"image_id": image_id, "angle_tag": int(angle_tag),
            "image": raster_encode(image),
            "frame": {"origin": [int(frame.origin[0]), int(frame.origin[1])],
                      "transform": transform_to_json(frame.rotation)}}


def instances_request_from_json(obj: dict) -> tuple[np.ndarray, str, int, InstanceFrame]:
    f = obj["frame"]
    frame = InstanceFrame(origin=(int(f["origin"][0]), int(f["origin"][1])),
                          rotation=transform_from_json(f.get("transform")))
    return raster_decode(obj["image"]), obj["image_id"], int(obj["angle_tag"]), frame


def instances_response_to_json(dets: list[Detection], image_id: str,
                               model_version: str) -> dict:
    return {"image_id": image_id, "detections": [detection_to_json(d) for d in dets],
            "model_version": model_version}


def instances_response_from_json(obj: dict) -> tuple[list[Detection], str]:
    return [detection_from_json(d) for d in obj["detections"]], obj["model_version"]


def dedup_request_to_json(dets: list[Detection], semantic: np.ndarray | None,
                          image_id: str, params_dict: dict) -> dict:
    return {"image_id": image_id,
            "detections": [detection_to_json(d) for d in dets],
            "semantic_mask": None if semantic is None else rle_encode(semantic),
            "params": params_dict}


def dedup_request_from_json(obj: dict) -> tuple[list[Detection], np.ndarray | None, str, dict]:
    semantic = obj.get("semantic_mask")
    return ([detection_from_json(d) for d in obj["detections"]],
            None if semantic is None else rle_decode(semantic),
            obj["image_id"], obj["params"])


def dedup_response_to_json(dets: list[Detection], image_id: str,
                           model_version: str) -> dict:
    return instances_response_to_json(dets, image_id, model_version)


def dedup_response_from_json(obj: dict) -> tuple[list[Detection], str]:
    return instances_response_from_json(obj)


def classify_request_to_json(patch: np.ndarray, mask: np.ndarray, augmented: bool,
                             image_id: str, origin: tuple[int, int]) -> dict:
    return {"image_id": image_id, "patch": raster_encode(patch),
            "mask": rle_encode(mask), "augmented": bool(augmented),
            "frame": {"origin": [int(origin[0]), int(origin[1])]}}


def classify_request_from_json(obj: dict) -> tuple[np.ndarray, np.ndarray, bool, str, tuple[int, int]]:
    origin = obj["frame"]["origin"]
    return (raster_decode(obj["patch"]), rle_decode(obj["mask"]),
            bool(obj["augmented"]), obj["image_id"], (int(origin[0]), int(origin[1])))


def classify_response_to_json(result: ClassifyResult, image_id: str) -> dict:
    return {"image_id": image_id,
            "class_probs": [float(p) for p in result.class_probs],
            "rotation_sin": float(result.rotation_sin),
            "rotation_cos": float(result.rotation_cos),
            "model_version": result.model_version}


def classify_response_from_json(obj: dict) -> ClassifyResult:
    return ClassifyResult(class_probs=[float(p) for p in obj["class_probs"]],
                          rotation_sin=float(obj["rotation_sin"]),
                          rotation_cos=float(obj["rotation_cos"]),
                          model_version=obj["model_version"])
