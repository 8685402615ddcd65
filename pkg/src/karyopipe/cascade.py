"""ROI-narrowing cascade: geometry engine and stage driver.

The eight-stage flow narrows a full metaphase image to the chromosome-bearing
region in two steps (a fast threshold prefilter at thumbnail scale, then a
semantic-mask-derived tight crop), runs instance detection at two angles on
the narrow crop, resolves duplicates against the semantic mask, classifies
each instance, and maps everything back to exact original-image coordinates.

Model-dependent stages (semantic segmentation, instance detection, duplicate
resolution, classification) are called through a :class:`StageBackends`
implementation: classical stubs, the ground-truth oracle, or remote HTTP
services. When an optional backend fails, the documented degraded fallback
applies and the run completes with partial output instead of failing.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

import cv2
import numpy as np

from .chromosomes import CLASSES, UNKNOWN, uniform_probs
from .errors import EmptySemanticMask, NoForeground, DegenerateHistogram
from .imaging import (
    AffineTransform,
    Rect,
    connected_components,
    mask_bbox,
    otsu_threshold,
    pad_edge_replicate,
    rasterize_polygon,
    resize_constrained,
    resize_mask_nearest,
    rotate_expand,
    round_half_up,
    trace_boundary,
    warp_mask,
)

__all__ = [
    "CascadeParams",
    "RoiChain",
    "Detection",
    "Annotation",
    "SemsegFrame",
    "InstanceFrame",
    "SemsegResult",
    "InstancesResult",
    "ClassifyResult",
    "StageBackends",
    "Stage",
    "Outcome",
    "StageStatus",
    "FallbackAction",
    "DEGRADED_FALLBACKS",
    "CascadeResult",
    "prefilter_crop",
    "prepare_semseg_input",
    "mask_bbox_crop",
    "two_angle_merge",
    "warp_detection",
    "detection_iou",
    "resolve_duplicates",
    "back_transform",
    "classify_label",
    "run_cascade",
]


@dataclass(frozen=True)
class CascadeParams:
    """Tunable cascade thresholds. All margins are at original resolution."""

    thumb_max_dim: int = 256
    min_component_area: int = 8          # at thumbnail scale
    crop1_margin: int = 16
    crop2_margin: int = 12
    semseg_min_dim: int = 512
    semseg_max_dim: int = 992
    semseg_canvas: int = 992
    merge_iou: float = 0.7
    dedup_center_dist: float = 20.0
    semantic_agreement_min: float = 0.3
    unknown_margin: float = 0.05         # top class prob below this => Unknown

    def __post_init__(self) -> None:
        if min(self.crop1_margin, self.crop2_margin) < 0:
            raise ValueError("margins must be >= 0")
        if not 0.0 < self.merge_iou < 1.0:
            raise ValueError("merge_iou must be in (0, 1)")
        if not 0.0 <= self.semantic_agreement_min <= 1.0:
            raise ValueError("semantic_agreement_min must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "thumb_max_dim": self.thumb_max_dim,
            "min_component_area": self.min_component_area,
            "crop1_margin": self.crop1_margin,
            "crop2_margin": self.crop2_margin,
            "semseg_min_dim": self.semseg_min_dim,
            "semseg_max_dim": self.semseg_max_dim,
            "semseg_canvas": self.semseg_canvas,
            "merge_iou": self.merge_iou,
            "dedup_center_dist": self.dedup_center_dist,
            "semantic_agreement_min": self.semantic_agreement_min,
            "unknown_margin": self.unknown_margin,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CascadeParams":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass(frozen=True)
class RoiChain:
    """Full geometric record of crop1 -> resize -> pad -> crop2.

    `crop1` and `crop2` are at original resolution; `semseg_scale` is the
    resize factor applied between crop1 and the fixed semantic canvas; the
    pad offset is (0, 0) by construction (source in the top-left corner).
    """

    crop1: Rect
    semseg_scale: float
    crop2: Rect

    def __post_init__(self) -> None:
        if self.semseg_scale <= 0:
            raise ValueError("semseg_scale must be > 0")
        if not self.crop1.contains(self.crop2):
            raise ValueError("crop2 must lie inside crop1")

    def crop2_to_original(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts + np.array([self.crop2.x0, self.crop2.y0], dtype=np.float64)

    def original_to_crop2(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts - np.array([self.crop2.x0, self.crop2.y0], dtype=np.float64)

    def original_to_canvas(self, points: np.ndarray) -> np.ndarray:
        """Original coords -> semantic-canvas coords (crop1, scale, zero pad)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return (pts - [self.crop1.x0, self.crop1.y0]) * self.semseg_scale

    def canvas_to_original(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts / self.semseg_scale + [self.crop1.x0, self.crop1.y0]

    def to_dict(self) -> dict:
        return {
            "crop1": [self.crop1.x0, self.crop1.y0, self.crop1.w, self.crop1.h],
            "semseg_scale": self.semseg_scale,
            "pad_offset": [0, 0],
            "crop2": [self.crop2.x0, self.crop2.y0, self.crop2.w, self.crop2.h],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RoiChain":
        return cls(crop1=Rect(*data["crop1"]), semseg_scale=data["semseg_scale"],
                   crop2=Rect(*data["crop2"]))


@dataclass
class Detection:
    """One instance candidate: bbox-local mask placed on a stage-local frame."""

    mask: np.ndarray      # bool, shape (bbox.h, bbox.w), nonempty
    bbox: Rect            # tight placement in the frame
    score: float

    @classmethod
    def from_frame_mask(cls, frame_mask: np.ndarray, score: float) -> "Detection | None":
        bbox = mask_bbox(frame_mask)
        if bbox is None:
            return None
        return cls(mask=bbox.crop(frame_mask).copy(), bbox=bbox, score=float(score))

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.mask))

    def centroid(self) -> tuple[float, float]:
        ys, xs = np.nonzero(self.mask)
        return float(self.bbox.x0 + xs.mean()), float(self.bbox.y0 + ys.mean())

    def frame_mask(self, width: int, height: int) -> np.ndarray:
        out = np.zeros((height, width), dtype=bool)
        out[self.bbox.y0:self.bbox.y1, self.bbox.x0:self.bbox.x1] = self.mask
        return out


def detection_iou(a: Detection, b: Detection) -> float:
    """Mask IoU of two detections in a shared frame, via bbox windows."""
    ix0 = max(a.bbox.x0, b.bbox.x0)
    iy0 = max(a.bbox.y0, b.bbox.y0)
    ix1 = min(a.bbox.x1, b.bbox.x1)
    iy1 = min(a.bbox.y1, b.bbox.y1)
    if ix1 <= ix0 or iy1 <= iy0:
        return 0.0
    wa = a.mask[iy0 - a.bbox.y0:iy1 - a.bbox.y0, ix0 - a.bbox.x0:ix1 - a.bbox.x0]
    wb = b.mask[iy0 - b.bbox.y0:iy1 - b.bbox.y0, ix0 - b.bbox.x0:ix1 - b.bbox.x0]
    inter = int(np.count_nonzero(wa & wb))
    if inter == 0:
        return 0.0
    return inter / (a.area + b.area - inter)


@dataclass
class Annotation:
    """One chromosome in original-image coordinates."""

    polygon: np.ndarray           # (N, 2) int64 vertices, closed implicitly
    class_label: str              # "1".."22" | "X" | "Y" | "Unknown"
    class_probs: list[float]      # 24 reals over CLASSES order, sum 1
    rotation: tuple[float, float]  # (sin, cos), sin^2 + cos^2 = 1
    score: float
    id: int | None = None

    def mask(self, width: int, height: int) -> np.ndarray:
        return rasterize_polygon(self.polygon, width, height)

    def angle_degrees(self) -> float:
        return math.degrees(math.atan2(self.rotation[0], self.rotation[1]))


# --- stage-boundary data -----------------------------------------------------

@dataclass(frozen=True)
class SemsegFrame:
    """Geometry metadata for a semantic request: crop1 and the resize scale."""
    crop1: Rect
    scale: float


@dataclass(frozen=True)
class InstanceFrame:
    """Geometry metadata for an instance request.

    `origin` is the crop2 top-left in original coordinates; `rotation` maps
    crop2-local coordinates to the request raster for the 45-degree pass and
    is None for the axis-aligned pass.
    """
    origin: tuple[int, int]
    rotation: AffineTransform | None = None


@dataclass
class SemsegResult:
    classes: np.ndarray           # uint8 canvas, values {0, 1, 2}
    model_version: str
    warning: str | None = None


@dataclass
class InstancesResult:
    detections: list[Detection]
    model_version: str


@dataclass
class ClassifyResult:
    class_probs: list[float]
    rotation_sin: float
    rotation_cos: float
    model_version: str


class StageBackends(Protocol):
    """The four model-stage callables; stubs, oracle, and HTTP clients conform."""

    def semseg(self, image: np.ndarray, image_id: str, frame: SemsegFrame) -> SemsegResult: ...

    def instances(self, image: np.ndarray, image_id: str, angle_tag: int,
                  frame: InstanceFrame) -> InstancesResult: ...

    def dedup(self, detections: list[Detection], semantic: np.ndarray | None,
              image_id: str, params: "CascadeParams") -> list[Detection]: ...

    def classify(self, patch: np.ndarray, mask: np.ndarray, augmented: bool,
                 image_id: str, origin: tuple[int, int]) -> ClassifyResult: ...


# --- stage bookkeeping --------------------------------------------------------

class Stage(str, Enum):
    PREFILTER = "Prefilter"
    SEMSEG = "SemSeg"
    MASK_CROP = "MaskCrop"
    INSTANCE_0 = "Instance0"
    INSTANCE_45 = "Instance45"
    DEDUP = "Dedup"
    CLASSIFY = "Classify"
    BACK_TRANSFORM = "BackTransform"


STAGE_ORDER: tuple[Stage, ...] = tuple(Stage)


class Outcome(str, Enum):
    OK = "Ok"
    DEGRADED = "Degraded"
    FAILED = "Failed"


@dataclass
class StageStatus:
    stage: Stage
    outcome: Outcome
    latency_ms: float = 0.0
    detail: str = ""

    def to_dict(self) -> dict:
        return {"stage": self.stage.value, "outcome": self.outcome.value,
                "latency_ms": self.latency_ms, "detail": self.detail}


class FallbackAction(str, Enum):
    FAIL_JOB = "fail_job"                 # no useful partial result possible
    FULL_IMAGE_CROP = "full_image_crop"   # crop1 := whole image
    USE_CROP1 = "use_crop1"               # crop2 := crop1, skip semantic check
    USE_OTHER_ANGLE = "use_other_angle"   # single-angle instance result
    PASS_THROUGH = "pass_through"         # skip duplicate resolution
    ALL_UNKNOWN = "all_unknown"           # uniform probs, Unknown labels
    NONE = "none"                         # local stage: failure fails the job


# Deterministic degraded-operation table. NoForeground at the prefilter and a
# double instance-pass outage have no useful fallback; everything else
# degrades to a partial result.
DEGRADED_FALLBACKS: dict[Stage, FallbackAction] = {
    Stage.PREFILTER: FallbackAction.FAIL_JOB,
    Stage.SEMSEG: FallbackAction.USE_CROP1,
    Stage.MASK_CROP: FallbackAction.USE_CROP1,
    Stage.INSTANCE_0: FallbackAction.USE_OTHER_ANGLE,
    Stage.INSTANCE_45: FallbackAction.USE_OTHER_ANGLE,
    Stage.DEDUP: FallbackAction.PASS_THROUGH,
    Stage.CLASSIFY: FallbackAction.ALL_UNKNOWN,
    Stage.BACK_TRANSFORM: FallbackAction.NONE,
}


# --- geometry operations ------------------------------------------------------

def prefilter_crop(original: np.ndarray, params: CascadeParams) -> Rect:
    """Stage 1: threshold a thumbnail and bound the surviving components.

    Raises NoForeground when nothing survives the minimum-area filter (blank
    or constant images included).
    """
    h, w = original.shape
    if max(w, h) > params.thumb_max_dim:
        s = params.thumb_max_dim / max(w, h)
        thumb = cv2.resize(original, (round_half_up(w * s), round_half_up(h * s)),
                           interpolation=cv2.INTER_LINEAR)
    else:
        s = 1.0
        thumb = original
    try:
        t = otsu_threshold(thumb)
    except DegenerateHistogram as exc:
        raise NoForeground("constant image has no foreground") from exc
    labeled = connected_components(thumb <= t, connectivity=8)
    survivors = [c for c in labeled.components if c.area >= params.min_component_area]
    if not survivors:
        raise NoForeground(
            f"no component of area >= {params.min_component_area} at thumbnail scale")
    union = survivors[0].bbox
    for comp in survivors[1:]:
        union = union.union(comp.bbox)
    x0 = math.floor(union.x0 / s)
    y0 = math.floor(union.y0 / s)
    x1 = math.ceil(union.x1 / s)
    y1 = math.ceil(union.y1 / s)
    rect = Rect(x0, y0, max(1, x1 - x0), max(1, y1 - y0))
    return rect.expand(params.crop1_margin).clamp(w, h)


def prepare_semseg_input(original: np.ndarray, crop1: Rect,
                         params: CascadeParams) -> tuple[np.ndarray, float]:
    """Stage 2: crop, constrained resize, edge-replication pad to the fixed canvas."""
    crop = crop1.crop(original)
    resized, scale = resize_constrained(crop, params.semseg_min_dim, params.semseg_max_dim)
    padded = pad_edge_replicate(resized, params.semseg_canvas, params.semseg_canvas)
    return padded, scale


def _unpadded_extent(crop1: Rect, scale: float, params: CascadeParams) -> tuple[int, int]:
    rw = min(params.semseg_canvas, max(1, round_half_up(crop1.w * scale)))
    rh = min(params.semseg_canvas, max(1, round_half_up(crop1.h * scale)))
    return rw, rh


def mask_bbox_crop(sem_classes: np.ndarray, crop1: Rect, semseg_scale: float,
                   params: CascadeParams) -> Rect:
    """Stage 4: bound the semantic foreground and lift it to original coords."""
    rw, rh = _unpadded_extent(crop1, semseg_scale, params)
    fg = sem_classes[:rh, :rw] > 0
    bb = mask_bbox(fg)
    if bb is None:
        raise EmptySemanticMask("semantic mask has no foreground in the unpadded region")
    x0 = math.floor(bb.x0 / semseg_scale)
    y0 = math.floor(bb.y0 / semseg_scale)
    x1 = math.ceil(bb.x1 / semseg_scale)
    y1 = math.ceil(bb.y1 / semseg_scale)
    rect = Rect(crop1.x0 + x0, crop1.y0 + y0,
                max(1, x1 - x0), max(1, y1 - y0)).expand(params.crop2_margin)
    # clamp inside crop1
    cx0 = max(rect.x0, crop1.x0)
    cy0 = max(rect.y0, crop1.y0)
    cx1 = min(rect.x1, crop1.x1)
    cy1 = min(rect.y1, crop1.y1)
    return Rect(cx0, cy0, max(1, cx1 - cx0), max(1, cy1 - cy0))


def semantic_mask_for_crop2(sem_classes: np.ndarray, chain: RoiChain,
                            params: CascadeParams) -> np.ndarray:
    """Upscale the canvas foreground (classes 1 and 2) into crop2-local coords."""
    rw, rh = _unpadded_extent(chain.crop1, chain.semseg_scale, params)
    fg = sem_classes[:rh, :rw] > 0
    crop1_mask = resize_mask_nearest(fg, chain.crop1.w, chain.crop1.h)
    ox = chain.crop2.x0 - chain.crop1.x0
    oy = chain.crop2.y0 - chain.crop1.y0
    return crop1_mask[oy:oy + chain.crop2.h, ox:ox + chain.crop2.w]


def warp_detection(det: Detection, to_frame: AffineTransform,
                    frame_w: int, frame_h: int) -> Detection | None:
    """Map a detection into another frame with nearest-neighbor resampling."""
    local_to_frame = to_frame.compose(
        AffineTransform.translation(det.bbox.x0, det.bbox.y0))
    corners = np.array([[-0.5, -0.5], [det.bbox.w - 0.5, -0.5],
                        [det.bbox.w - 0.5, det.bbox.h - 0.5], [-0.5, det.bbox.h - 0.5]])
    mapped = local_to_frame.apply(corners)
    x0 = max(0, math.floor(mapped[:, 0].min()) - 1)
    y0 = max(0, math.floor(mapped[:, 1].min()) - 1)
    x1 = min(frame_w, math.ceil(mapped[:, 0].max()) + 2)
    y1 = min(frame_h, math.ceil(mapped[:, 1].max()) + 2)
    if x1 <= x0 or y1 <= y0:
        return None
    window = AffineTransform.translation(-x0, -y0).compose(local_to_frame)
    warped = warp_mask(det.mask, window, x1 - x0, y1 - y0)
    tight = mask_bbox(warped)
    if tight is None:
        return None
    return Detection(mask=tight.crop(warped).copy(),
                     bbox=Rect(x0 + tight.x0, y0 + tight.y0, tight.w, tight.h),
                     score=det.score)


def two_angle_merge(dets0: list[Detection], dets45: list[Detection],
                    rot45: AffineTransform, params: CascadeParams,
                    frame_w: int, frame_h: int) -> list[Detection]:
    """Stage 5 merge: map the rotated pass back, then greedy NMS by score.

    Output is ordered by descending score, which makes the merge idempotent.
    """
    pooled = list(dets0)
    if dets45:
        inv = rot45.invert()
        for det in dets45:
            mapped = warp_detection(det, inv, frame_w, frame_h)
            if mapped is not None:
                pooled.append(mapped)
    pooled.sort(key=lambda d: -d.score)
    kept: list[Detection] = []
    for det in pooled:
        if all(detection_iou(det, k) < params.merge_iou for k in kept):
            kept.append(det)
    return kept


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _merge_cluster(dets: list[Detection]) -> Detection:
    bbox = dets[0].bbox
    for d in dets[1:]:
        bbox = bbox.union(d.bbox)
    mask = np.zeros((bbox.h, bbox.w), dtype=bool)
    for d in dets:
        mask[d.bbox.y0 - bbox.y0:d.bbox.y1 - bbox.y0,
             d.bbox.x0 - bbox.x0:d.bbox.x1 - bbox.x0] |= d.mask
    return Detection(mask=mask, bbox=bbox, score=max(d.score for d in dets))


def resolve_duplicates(dets: list[Detection], sem_upscaled: np.ndarray | None,
                       params: CascadeParams) -> list[Detection]:
    """Stage 6: merge near-duplicates, then sanity-check against the semantic mask.

    Nearby high-overlap detections are merged (union mask, max score). Each
    surviving mask is intersected with the semantic foreground; detections
    with less than `semantic_agreement_min` of their pixels inside it are
    dropped. With no semantic mask (degraded), the merge still runs and the
    sanity check is skipped.
    """
    if not dets:
        return []
    uf = _UnionFind(len(dets))
    centroids = [d.centroid() for d in dets]
    for i in range(len(dets)):
        for j in range(i + 1, len(dets)):
            dist = math.hypot(centroids[i][0] - centroids[j][0],
                              centroids[i][1] - centroids[j][1])
            if dist <= params.dedup_center_dist and \
                    detection_iou(dets[i], dets[j]) >= params.merge_iou:
                uf.union(i, j)
    clusters: dict[int, list[Detection]] = {}
    for i, det in enumerate(dets):
        clusters.setdefault(uf.find(i), []).append(det)
    merged = [ds[0] if len(ds) == 1 else _merge_cluster(ds) for ds in clusters.values()]
    merged.sort(key=lambda d: -d.score)

    if sem_upscaled is None:
        return merged
    out: list[Detection] = []
    for det in merged:
        window = sem_upscaled[det.bbox.y0:det.bbox.y1, det.bbox.x0:det.bbox.x1]
        inside = int(np.count_nonzero(det.mask & window))
        if inside / det.area < params.semantic_agreement_min:
            continue
        clipped = _clip_detection(det.mask & window, det.bbox, det.score)
        if clipped is not None:
            out.append(clipped)
    return out


def _clip_detection(local_mask: np.ndarray, bbox: Rect, score: float) -> Detection | None:
    """Re-tighten a detection whose bbox-local mask shrank."""
    tight = mask_bbox(local_mask)
    if tight is None:
        return None
    return Detection(mask=tight.crop(local_mask).copy(),
                     bbox=Rect(bbox.x0 + tight.x0, bbox.y0 + tight.y0, tight.w, tight.h),
                     score=score)


def back_transform(dets: list[Detection], chain: RoiChain) -> list[np.ndarray]:
    """Stage 8: trace each mask to a boundary polygon in original coordinates.

    Masks that split into several regions keep their largest region.
    """
    polygons = []
    for det in dets:
        poly = trace_boundary(det.mask).astype(np.int64)
        poly[:, 0] += det.bbox.x0 + chain.crop2.x0
        poly[:, 1] += det.bbox.y0 + chain.crop2.y0
        polygons.append(poly)
    return polygons


def classify_label(probs: list[float], unknown_margin: float) -> str:
    """Argmax label; Unknown when no class clears the confidence floor."""
    top = max(probs)
    if top < unknown_margin:
        return UNKNOWN
    return CLASSES[probs.index(top)]


# --- stage driver --------------------------------------------------------------

@dataclass
class CascadeResult:
    annotations: list[Annotation]
    chain: RoiChain | None
    statuses: list[StageStatus]
    error: str | None = None

    @property
    def state(self) -> str:
        """Terminal job state: Done, Partial, or Failed."""
        if self.error is not None or any(s.outcome is Outcome.FAILED for s in self.statuses):
            return "Failed"
        if any(s.outcome is Outcome.DEGRADED for s in self.statuses):
            return "Partial"
        return "Done"


class _StatusLog:
    def __init__(self) -> None:
        self.entries: dict[Stage, StageStatus] = {}

    def record(self, stage: Stage, outcome: Outcome, started: float,
               detail: str = "", ended: float | None = None) -> None:
        ended = time.perf_counter() if ended is None else ended
        self.entries[stage] = StageStatus(
            stage=stage, outcome=outcome,
            latency_ms=(ended - started) * 1000.0, detail=detail)

    def finish(self) -> list[StageStatus]:
        out = []
        for stage in STAGE_ORDER:
            if stage in self.entries:
                out.append(self.entries[stage])
            else:
                out.append(StageStatus(stage=stage, outcome=Outcome.FAILED,
                                       latency_ms=0.0, detail="not reached (upstream failure)"))
        return out


def _call_with_retry(fn, retries: int):
    """Run a backend call with bounded retries; returns (value, error)."""
    last: Exception | None = None
    for _ in range(retries + 1):
        try:
            return fn(), None
        except Exception as exc:  # noqa: BLE001 - transport boundary
            last = exc
    return None, last


def run_cascade(original: np.ndarray, params: CascadeParams,
                backends: StageBackends, image_id: str = "",
                retries: int = 1) -> CascadeResult:
    """Execute stages 1-8 with per-stage status, timing, and degraded fallbacks."""
    log = _StatusLog()

    # stage 1: prefilter
    t0 = time.perf_counter()
    try:
        crop1 = prefilter_crop(original, params)
        log.record(Stage.PREFILTER, Outcome.OK, t0)
    except NoForeground as exc:
        log.record(Stage.PREFILTER, Outcome.FAILED, t0, str(exc))
        return CascadeResult([], None, log.finish(), error=f"NoForeground: {exc}")
    except Exception as exc:  # noqa: BLE001 - apply the full-image fallback
        h, w = original.shape
        crop1 = Rect(0, 0, w, h)
        log.record(Stage.PREFILTER, Outcome.DEGRADED, t0,
                   f"full-image fallback after: {exc}")

    # stage 2+3: semantic input preparation and segmentation
    t0 = time.perf_counter()
    canvas, scale = prepare_semseg_input(original, crop1, params)
    frame = SemsegFrame(crop1=crop1, scale=scale)
    sem_result, sem_err = _call_with_retry(
        lambda: backends.semseg(canvas, image_id, frame), retries)
    sem_classes: np.ndarray | None = None
    if sem_err is not None:
        log.record(Stage.SEMSEG, Outcome.DEGRADED, t0, f"unavailable: {sem_err}")
    elif sem_result.classes.shape != canvas.shape:
        log.record(Stage.SEMSEG, Outcome.DEGRADED, t0,
                   f"bad mask shape {sem_result.classes.shape}")
    else:
        sem_classes = sem_result.classes
        detail = sem_result.warning or ""
        log.record(Stage.SEMSEG, Outcome.OK, t0, detail)

    # stage 4: mask bbox crop (crop2 := crop1 when the semantic stage is out)
    t0 = time.perf_counter()
    crop2 = crop1
    semantic_available = False
    if sem_classes is not None:
        try:
            crop2 = mask_bbox_crop(sem_classes, crop1, scale, params)
            semantic_available = True
            log.record(Stage.MASK_CROP, Outcome.OK, t0)
        except EmptySemanticMask as exc:
            log.record(Stage.MASK_CROP, Outcome.DEGRADED, t0,
                       f"crop2 = crop1 fallback: {exc}")
    else:
        log.record(Stage.MASK_CROP, Outcome.DEGRADED, t0,
                   "crop2 = crop1 fallback (semantic stage unavailable)")
    chain = RoiChain(crop1=crop1, semseg_scale=scale, crop2=crop2)

    # stage 5: instance detection at 0 and 45 degrees; the calls are
    # independent but run sequentially so per-stage latencies stay additive
    crop2_img = np.ascontiguousarray(crop2.crop(original))
    rot_img, rot45 = rotate_expand(crop2_img, 45.0)
    frame0 = InstanceFrame(origin=(crop2.x0, crop2.y0), rotation=None)
    frame45 = InstanceFrame(origin=(crop2.x0, crop2.y0), rotation=rot45)
    t0 = time.perf_counter()
    res0, err0 = _call_with_retry(
        lambda: backends.instances(crop2_img, image_id, 0, frame0), retries)
    t45 = time.perf_counter()
    res45, err45 = _call_with_retry(
        lambda: backends.instances(rot_img, image_id, 45, frame45), retries)
    t_end = time.perf_counter()
    if err0 is not None and err45 is not None:
        log.record(Stage.INSTANCE_0, Outcome.FAILED, t0, f"unavailable: {err0}",
                   ended=t45)
        log.record(Stage.INSTANCE_45, Outcome.FAILED, t45, f"unavailable: {err45}",
                   ended=t_end)
        return CascadeResult([], chain, log.finish(),
                             error="both instance passes unavailable")
    if err0 is not None:
        log.record(Stage.INSTANCE_0, Outcome.DEGRADED, t0,
                   f"single-angle fallback: {err0}", ended=t45)
    else:
        log.record(Stage.INSTANCE_0, Outcome.OK, t0, ended=t45)
    if err45 is not None:
        log.record(Stage.INSTANCE_45, Outcome.DEGRADED, t45,
                   f"single-angle fallback: {err45}", ended=t_end)
    else:
        log.record(Stage.INSTANCE_45, Outcome.OK, t45, ended=t_end)
    dets0 = res0.detections if res0 is not None else []
    dets45 = res45.detections if res45 is not None else []
    merged = two_angle_merge(dets0, dets45, rot45, params, crop2.w, crop2.h)

    # stage 6: duplicate resolution against the upscaled semantic mask
    sem_crop2 = semantic_mask_for_crop2(sem_classes, chain, params) \
        if semantic_available else None
    t0 = time.perf_counter()
    dets, dedup_err = _call_with_retry(
        lambda: backends.dedup(merged, sem_crop2, image_id, params), retries)
    if dedup_err is not None:
        dets = merged
        log.record(Stage.DEDUP, Outcome.DEGRADED, t0, f"pass-through: {dedup_err}")
    else:
        log.record(Stage.DEDUP, Outcome.OK, t0)

    # stage 7: classification with the two-pass Unknown retry
    t0 = time.perf_counter()
    labels: list[str] = []
    probs: list[list[float]] = []
    rotations: list[tuple[float, float]] = []
    classify_failed = False
    for det in dets:
        patch = np.ascontiguousarray(det.bbox.crop(crop2_img))
        origin = (crop2.x0 + det.bbox.x0, crop2.y0 + det.bbox.y0)
        result, err = _call_with_retry(
            lambda: backends.classify(patch, det.mask, False, image_id, origin), retries)
        if err is None:
            label = classify_label(result.class_probs, params.unknown_margin)
            if label == UNKNOWN:
                # second pass with stronger augmentation
                result2, err = _call_with_retry(
                    lambda: backends.classify(patch, det.mask, True, image_id, origin),
                    retries)
                if err is None:
                    result = result2
                    label = classify_label(result.class_probs, params.unknown_margin)
        if err is not None:
            classify_failed = True
            break
        labels.append(label)
        probs.append(list(result.class_probs))
        rotations.append((result.rotation_sin, result.rotation_cos))
    if classify_failed:
        labels = [UNKNOWN] * len(dets)
        probs = [uniform_probs() for _ in dets]
        rotations = [(0.0, 1.0)] * len(dets)
        log.record(Stage.CLASSIFY, Outcome.DEGRADED, t0,
                   "all Unknown: classification unavailable")
    else:
        log.record(Stage.CLASSIFY, Outcome.OK, t0)

    # stage 8: back-transformation into original coordinates
    t0 = time.perf_counter()
    polygons = back_transform(dets, chain)
    annotations = [
        Annotation(polygon=poly, class_label=lab, class_probs=pb,
                   rotation=rot, score=det.score, id=i)
        for i, (poly, lab, pb, rot, det) in enumerate(
            zip(polygons, labels, probs, rotations, dets))
    ]
    log.record(Stage.BACK_TRANSFORM, Outcome.OK, t0)
    return CascadeResult(annotations, chain, log.finish())
