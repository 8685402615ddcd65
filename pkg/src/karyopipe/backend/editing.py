"""Expert-edit semantics, optimistic versioning, and audit replay.

Annotation sets are versioned snapshots: version 0 is the pipeline output and
every edit produces version N+1 plus one append-only audit event. Folding the
events over version 0 reproduces any stored snapshot byte-for-byte, which is
the consistency check the audit trail exists for.

Edits operate on the serialized annotation dictionaries (the snapshot
representation) so that replay is exactly the stored computation.
"""

from __future__ import annotations

import copy
import math

import numpy as np

from ..chromosomes import UNKNOWN, asserted_probs, is_valid_class
from ..errors import UnknownAnnotation, UnknownVersion, VersionConflict
from ..imaging import rasterize_polygon, trace_boundary
from ..storage import AuditEventRecord, Store

__all__ = ["EDIT_OPS", "apply_edit_op", "apply_edit", "replay_audit"]

EDIT_OPS = ("delete", "merge", "split", "redraw", "reclassify", "rotate", "flip")


def _find(annotations: list[dict], ann_id: int) -> int:
    for i, ann in enumerate(annotations):
        if ann["id"] == ann_id:
            return i
    raise UnknownAnnotation(f"no annotation with id {ann_id}")


def _check_polygon(polygon) -> list[list[int]]:
    if not isinstance(polygon, (list, tuple)) or len(polygon) < 3:
        raise ValueError("polygon must have at least 3 vertices")
    return [[int(round(float(x))), int(round(float(y)))] for x, y in polygon]


def _rotation_angle(ann: dict) -> float:
    return math.atan2(ann["rotation"]["sin"], ann["rotation"]["cos"])


def _merge_polygon(members: list[dict], width: int, height: int) -> list[list[int]]:
    """Union the rasterized member polygons and trace the result."""
    union = np.zeros((height, width), dtype=bool)
    for ann in members:
        union |= rasterize_polygon(np.array(ann["polygon"]), width, height)
    poly = trace_boundary(union)
    return [[int(x), int(y)] for x, y in poly]


def apply_edit_op(annotations: list[dict], next_id: int, edit: dict,
                  width: int, height: int) -> tuple[list[dict], int]:
    """Pure edit application: returns (new annotations, new id counter).

    The input list is never mutated; replay folds this function over the
    stored events.
    """
    anns = copy.deepcopy(annotations)
    op = edit.get("op")
    if op == "delete":
        anns.pop(_find(anns, edit["id"]))
        return anns, next_id

    if op == "merge":
        ids = list(edit["ids"])
        if len(set(ids)) < 2:
            raise ValueError("merge needs at least two distinct annotation ids")
        members = [anns[_find(anns, ann_id)] for ann_id in ids]
        label = edit.get("class", UNKNOWN)
        if not is_valid_class(label):
            raise ValueError(f"unknown class {label!r}")
        largest = max(members, key=lambda a: float(
            rasterize_polygon(np.array(a["polygon"]), width, height).sum()))
        merged = {
            "id": next_id,
            "polygon": _merge_polygon(members, width, height),
            "class": label,
            "probs": asserted_probs(label),
            "rotation": dict(largest["rotation"]),
            "score": max(a["score"] for a in members),
        }
        anns = [a for a in anns if a["id"] not in set(ids)]
        anns.append(merged)
        return anns, next_id + 1

    if op == "split":
        idx = _find(anns, edit["id"])
        original = anns.pop(idx)
        parts = []
        for key, part_id in (("polygon_a", next_id), ("polygon_b", next_id + 1)):
            parts.append({
                "id": part_id,
                "polygon": _check_polygon(edit[key]),
                "class": original["class"],
                "probs": list(original["probs"]),
                "rotation": dict(original["rotation"]),
                "score": original["score"],
            })
        anns.extend(parts)
        return anns, next_id + 2

    if op == "redraw":
        ann = anns[_find(anns, edit["id"])]
        ann["polygon"] = _check_polygon(edit["polygon"])
        return anns, next_id

    if op == "reclassify":
        label = edit["class"]
        if not is_valid_class(label):
            raise ValueError(f"unknown class {label!r}")
        ann = anns[_find(anns, edit["id"])]
        ann["class"] = label
        ann["probs"] = asserted_probs(label)
        return anns, next_id

    if op == "rotate":
        ann = anns[_find(anns, edit["id"])]
        theta = _rotation_angle(ann) + math.radians(float(edit["degrees"]))
        ann["rotation"] = {"sin": math.sin(theta), "cos": math.cos(theta)}
        return anns, next_id

    if op == "flip":
        ann = anns[_find(anns, edit["id"])]
        ann["rotation"] = {"sin": -ann["rotation"]["sin"],
                           "cos": ann["rotation"]["cos"]}
        return anns, next_id

    raise ValueError(f"unknown edit op {op!r}")


def apply_edit(store: Store, image_id: str, tenant_id: str, actor: str,
               edit: dict, expected_version: int) -> tuple[dict, AuditEventRecord]:
    """Validate, apply, snapshot, and audit one edit.

    Raises VersionConflict when expected_version is stale, SignedOffImmutable
    on signed-off sets, UnknownAnnotation/ValueError on bad edits.
    """
    current = store.get_annotation_set(image_id, expected_version)
    latest = store.latest_annotation_version(image_id)
    if latest is None:
        raise UnknownVersion(f"image {image_id} has no annotation sets")
    if current is None or latest[0] != expected_version:
        raise VersionConflict(
            f"expected version {expected_version}, current is {latest[0]}")
    canvas = current["canvas"]
    new_annotations, next_id = apply_edit_op(
        current["annotations"], current["next_annotation_id"], edit,
        canvas["width"], canvas["height"])
    new_payload = {
        "image_id": image_id,
        "version": expected_version + 1,
        "canvas": canvas,
        "annotations": new_annotations,
        "next_annotation_id": next_id,
    }
    # the sign-off and version checks rerun atomically inside append_edit
    event = store.append_edit(image_id, tenant_id, actor, edit,
                              expected_version, new_payload)
    return new_payload, event


def replay_audit(store: Store, image_id: str, up_to_version: int) -> dict:
    """Fold audit events 1..v over version 0; equals the stored snapshot."""
    latest = store.latest_annotation_version(image_id)
    if latest is None or up_to_version > latest[0] or up_to_version < 0:
        raise UnknownVersion(
            f"version {up_to_version} does not exist for image {image_id}")
    payload = store.get_annotation_set(image_id, 0)
    annotations = payload["annotations"]
    next_id = payload["next_annotation_id"]
    canvas = payload["canvas"]
    for event in store.audit_events(image_id, up_to_version=up_to_version):
        annotations, next_id = apply_edit_op(
            annotations, next_id, event.edit, canvas["width"], canvas["height"])
    return {
        "image_id": image_id,
        "version": up_to_version,
        "canvas": canvas,
        "annotations": annotations,
        "next_annotation_id": next_id,
    }
