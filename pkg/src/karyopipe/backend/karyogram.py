"""Karyogram composition and numeric ISCN suggestion.

Annotations are grouped into the conventional size-group rows, each patch
cropped by its polygon, rotated upright from its (sin, cos) orientation, and
laid out on a white canvas. The ISCN suggestion covers whole-chromosome
numeric gains and losses; structural nomenclature is out of scope.
"""

from __future__ import annotations

import io
import math
from collections import Counter
from dataclasses import dataclass

import cv2
import numpy as np
from PIL import Image

from ..chromosomes import CLASSES, KARYOGRAM_GROUPS, UNKNOWN, karyogram_group
from ..imaging import mask_bbox, rasterize_polygon, rotation_canvas

__all__ = ["KaryogramLayout", "compose_karyogram", "render_karyogram_png", "iscn_suggest"]

_GAP = 8
_ROW_PAD = 12
_BACKGROUND = 255


@dataclass
class KaryogramLayout:
    groups: list[dict]        # [{"name": str, "member_ids": [int, ...]}]
    raster: np.ndarray        # composed grayscale image


def _class_order(label: str) -> int:
    return CLASSES.index(label) if label in CLASSES else len(CLASSES)


def _upright_patch(image: np.ndarray, ann: dict) -> np.ndarray:
    """Crop the annotation by its polygon and rotate it upright."""
    h, w = image.shape
    mask = rasterize_polygon(np.array(ann["polygon"]), w, h)
    bbox = mask_bbox(mask)
    if bbox is None:
        return np.full((4, 4), _BACKGROUND, dtype=np.uint8)
    local_mask = bbox.crop(mask)
    patch = bbox.crop(image).copy()
    patch[~local_mask] = _BACKGROUND
    theta = math.degrees(math.atan2(ann["rotation"]["sin"], ann["rotation"]["cos"]))
    if abs(theta) < 1e-9:
        return patch
    out_w, out_h, transform = rotation_canvas(patch.shape[1], patch.shape[0], theta)
    rotated = cv2.warpAffine(patch, transform.matrix, (out_w, out_h),
                             flags=cv2.INTER_NEAREST,
                             borderMode=cv2.BORDER_CONSTANT, borderValue=_BACKGROUND)
    rot_mask = cv2.warpAffine(local_mask.astype(np.uint8), transform.matrix,
                              (out_w, out_h), flags=cv2.INTER_NEAREST,
                              borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    tight = mask_bbox(rot_mask.astype(bool))
    if tight is None:
        return patch
    return tight.crop(rotated).copy()


def compose_karyogram(annotations: list[dict], image: np.ndarray) -> KaryogramLayout:
    """Group annotations into the nine rows and render the composite."""
    patches: dict[int, np.ndarray] = {}
    members: dict[str, list[dict]] = {name: [] for name in KARYOGRAM_GROUPS}
    for ann in annotations:
        group = karyogram_group(ann["class"])
        members[group].append(ann)
        patches[ann["id"]] = _upright_patch(image, ann)

    groups = []
    rows = []
    for name in KARYOGRAM_GROUPS:
        anns = sorted(members[name],
                      key=lambda a: (_class_order(a["class"]),
                                     -patches[a["id"]].shape[0]))
        groups.append({"name": name, "member_ids": [a["id"] for a in anns]})
        rows.append([patches[a["id"]] for a in anns])

    row_heights = [max((p.shape[0] for p in row), default=8) + _ROW_PAD for row in rows]
    row_widths = [sum(p.shape[1] for p in row) + _GAP * (len(row) + 1) for row in rows]
    canvas_w = max(max(row_widths), 64)
    canvas_h = sum(row_heights)
    canvas = np.full((canvas_h, canvas_w), _BACKGROUND, dtype=np.uint8)
    y = 0
    for row, height in zip(rows, row_heights):
        x = _GAP
        for patch in row:
            ph, pw = patch.shape
            top = y + (height - ph) // 2
            canvas[top:top + ph, x:x + pw] = np.minimum(
                canvas[top:top + ph, x:x + pw], patch)
            x += pw + _GAP
        y += height
    return KaryogramLayout(groups=groups, raster=canvas)


def render_karyogram_png(layout: KaryogramLayout) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(layout.raster, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def iscn_suggest(annotations: list[dict]) -> tuple[str, bool]:
    """Numeric ISCN string plus an uncertainty flag.

    Total count, sex complement from the X/Y counts, then one gain/loss term
    per deviating autosome in ascending order. Unknown-class annotations make
    the suggestion partial: they count toward the total but carry no class
    information, so the result is flagged uncertain.
    """
    counts = Counter(ann["class"] for ann in annotations)
    total = len(annotations)
    uncertain = counts.get(UNKNOWN, 0) > 0
    sex = "X" * counts.get("X", 0) + "Y" * counts.get("Y", 0)
    parts = [str(total)]
    if sex:
        parts.append(sex)
    for c in range(1, 23):
        deviation = counts.get(str(c), 0) - 2
        sign = "+" if deviation > 0 else "-"
        for _ in range(abs(deviation)):
            parts.append(f"{sign}{c}")
    return ",".join(parts), uncertain
