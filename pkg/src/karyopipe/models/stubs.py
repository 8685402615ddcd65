"""Deterministic classical stand-ins for the four model services.

Each stub is a pure function of its inputs (plus a fixed seed for the
augmented classification pass), so repeated calls are byte-identical. They
implement the service contracts with classical algorithms: thresholding for
segmentation, connected components for instances, second-moment geometry and
a size table for classification. Real models replace them behind the same
contracts.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from ..cascade import (
    CascadeParams,
    ClassifyResult,
    Detection,
    InstanceFrame,
    InstancesResult,
    SemsegFrame,
    SemsegResult,
    resolve_duplicates,
)
from ..chromosomes import CLASSES
from ..errors import DegenerateHistogram, EmptyMask
from ..imaging import connected_components, otsu_threshold
from ..synthgen import expected_mask_area

__all__ = [
    "STUB_MODEL_VERSION",
    "principal_axis_angle",
    "stub_semseg",
    "stub_instances",
    "stub_classify",
    "StubBackends",
]

STUB_MODEL_VERSION = "classical-stub/1"

# Components smaller than this are treated as debris by the instance stub.
STUB_MIN_INSTANCE_AREA = 24

# Softmax temperature for the size-table classifier, relative to patch area.
_SIZE_TEMPERATURE = 0.02

_EXPECTED_AREAS = np.array([expected_mask_area(label) for label in CLASSES])


def principal_axis_angle(mask: np.ndarray, jitter_rng: np.random.Generator | None = None) -> float:
    """Long-axis angle from vertical, degrees in (-90, 90].

    0 = upright; positive tilts toward +x. Optional coordinate jitter supports
    the augmented classification pass.
    """
    ys, xs = np.nonzero(np.asarray(mask, dtype=bool))
    if xs.size == 0:
        raise EmptyMask("cannot estimate an axis from an empty mask")
    x = xs.astype(np.float64)
    y = ys.astype(np.float64)
    if jitter_rng is not None:
        x = x + jitter_rng.normal(0.0, 0.5, size=x.shape)
        y = y + jitter_rng.normal(0.0, 0.5, size=y.shape)
    x -= x.mean()
    y -= y.mean()
    sxx = float(np.dot(x, x))
    syy = float(np.dot(y, y))
    sxy = float(np.dot(x, y))
    # principal axis of the 2x2 second-moment matrix
    theta_math = 0.5 * math.atan2(2.0 * sxy, sxx - syy)  # from the +x axis
    vx, vy = math.cos(theta_math), math.sin(theta_math)
    if vy < 0 or (vy == 0 and vx < 0):
        vx, vy = -vx, -vy
    angle = math.degrees(math.atan2(vx, vy))
    if angle <= -90.0:
        angle += 180.0
    return angle


def stub_semseg(image: np.ndarray, canvas_dim: int = 992) -> SemsegResult:
    """Threshold-based semantic stand-in: dark pixels are class 1 (chromosome).

    The overlap class (2) is always empty; a constant input yields an
    all-background mask plus a warning instead of an error.
    """
    if image.shape != (canvas_dim, canvas_dim):
        raise ValueError(f"semantic input must be {canvas_dim}x{canvas_dim}, "
                         f"got {image.shape}")
    try:
        t = otsu_threshold(image)
    except DegenerateHistogram:
        return SemsegResult(classes=np.zeros(image.shape, dtype=np.uint8),
                            model_version=STUB_MODEL_VERSION,
                            warning="constant input: no threshold, mask left empty")
    classes = (image <= t).astype(np.uint8)
    return SemsegResult(classes=classes, model_version=STUB_MODEL_VERSION)


def stub_instances(image: np.ndarray, min_area: int = STUB_MIN_INSTANCE_AREA) -> list[Detection]:
    """Connected-components instance stand-in.

    Each component of at least `min_area` dark pixels becomes one detection
    with score 0.5 + 0.5 * (area / largest area). Touching or overlapping
    chromosomes fuse into a single detection: the documented failure mode that
    feeds the merged-with-other evaluation outcome.
    """
    try:
        t = otsu_threshold(image)
    except DegenerateHistogram:
        return []
    labeled = connected_components(image <= t, connectivity=8)
    survivors = [c for c in labeled.components if c.area >= min_area]
    if not survivors:
        return []
    max_area = max(c.area for c in survivors)
    detections = []
    for comp in survivors:
        local = comp.bbox.crop(labeled.labels) == comp.id
        score = 0.5 + 0.5 * (comp.area / max_area)
        detections.append(Detection(mask=local, bbox=comp.bbox, score=score))
    return detections


def stub_classify(patch: np.ndarray, mask: np.ndarray, augmented: bool,
                  seed: int = 0) -> ClassifyResult:
    """Size-table classifier stand-in.

    Rotation comes from the mask's principal axis; class probabilities are a
    softmax over negative area distance to each class's expected area. The
    augmented pass applies a deterministic seed-derived coordinate jitter
    before the moment computation.
    """
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise EmptyMask("classification requires a nonempty mask")
    jitter_rng = None
    if augmented:
        jitter_rng = np.random.default_rng((seed & 0x7FFFFFFF) ^ zlib.crc32(m.tobytes()))
    angle = principal_axis_angle(m, jitter_rng)
    area = float(m.sum())
    temperature = max(area, 1.0) * _SIZE_TEMPERATURE
    logits = -np.abs(area - _EXPECTED_AREAS) / temperature
    logits -= logits.max()
    weights = np.exp(logits)
    probs = weights / weights.sum()
    theta = math.radians(angle)
    return ClassifyResult(class_probs=[float(p) for p in probs],
                          rotation_sin=math.sin(theta),
                          rotation_cos=math.cos(theta),
                          model_version=STUB_MODEL_VERSION)


@dataclass
class StubBackends:
    """In-process StageBackends implementation backed by the classical stubs."""

    seed: int = 0
    min_instance_area: int = STUB_MIN_INSTANCE_AREA
    canvas_dim: int = 992

    def semseg(self, image: np.ndarray, image_id: str, frame: SemsegFrame) -> SemsegResult:
        return stub_semseg(image, canvas_dim=self.canvas_dim)

    def instances(self, image: np.ndarray, image_id: str, angle_tag: int,
                  frame: InstanceFrame) -> InstancesResult:
        dets = stub_instances(image, min_area=self.min_instance_area)
        return InstancesResult(detections=dets, model_version=STUB_MODEL_VERSION)

    def dedup(self, detections: list[Detection], semantic: np.ndarray | None,
              image_id: str, params: CascadeParams) -> list[Detection]:
        return resolve_duplicates(detections, semantic, params)

    def classify(self, patch: np.ndarray, mask: np.ndarray, augmented: bool,
                 image_id: str, origin: tuple[int, int]) -> ClassifyResult:
        return stub_classify(patch, mask, augmented, seed=self.seed)
