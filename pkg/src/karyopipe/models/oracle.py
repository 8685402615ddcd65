"""Ground-truth oracle: a test double for all four model services.

The oracle answers requests from registered ground truth instead of running
any algorithm on the pixels. With zero noise its masks and classes are exact,
which makes it the reference backend for end-to-end pipeline verification.
Optional deterministic noise degrades masks to a target IoU and flips a fixed
fraction of class labels, seeded and reproducible.
"""

from __future__ import annotations

import math
import threading
import zlib
from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage

from ..cascade import (
    CascadeParams,
    ClassifyResult,
    Detection,
    InstanceFrame,
    InstancesResult,
    SemsegFrame,
    SemsegResult,
    warp_detection,
)
from ..chromosomes import CLASSES, CLASS_INDEX
from ..errors import UnknownImageId
from ..imaging import Rect, mask_bbox, mask_iou
from ..synthgen import GroundTruth

__all__ = ["OracleNoise", "OracleBackends", "ORACLE_MODEL_VERSION"]

ORACLE_MODEL_VERSION = "ground-truth-oracle/1"


@dataclass(frozen=True)
class OracleNoise:
    """Noise model: 0 disables an axis entirely."""

    iou_degrade: float = 0.0      # target IoU of degraded masks vs truth
    misclass_rate: float = 0.0    # fraction of labels flipped corpus-wide
    seed: int = 0


def _degrade_mask(mask: np.ndarray, target_iou: float,
                  rng: np.random.Generator, max_steps: int = 24) -> tuple[np.ndarray, int]:
    """Erode or dilate until IoU against the original first drops to target.

    Returns (degraded mask, padding applied); the caller shifts the bbox by
    the padding. Erosion stops before emptying the mask.
    """
    grow = bool(rng.random() < 0.5)
    pad = max_steps if grow else 0
    ref = np.pad(mask, pad) if pad else mask
    work = ref.copy()
    structure = np.ones((3, 3), dtype=bool)
    for _ in range(max_steps):
        if grow:
            nxt = ndimage.binary_dilation(work, structure)
        else:
            nxt = ndimage.binary_erosion(work, structure)
            if not nxt.any():
                break
        work = nxt
        if mask_iou(work, ref) <= target_iou:
            break
    return work, pad


class OracleBackends:
    """StageBackends implementation answering from registered ground truth."""

    def __init__(self, noise: OracleNoise = OracleNoise()):
        self.noise = noise
        self._truths: dict[str, GroundTruth] = {}
        self._semantic_cache: dict[str, np.ndarray] = {}
        self._flips: dict[tuple[str, int], str] | None = None
        self._lock = threading.Lock()

    # --- registry -----------------------------------------------------------

    def register(self, image_id: str, truth: GroundTruth) -> None:
        with self._lock:
            self._truths[image_id] = truth
            self._semantic_cache.pop(image_id, None)
            self._flips = None  # corpus changed: flip assignment recomputed

    def _truth(self, image_id: str) -> GroundTruth:
        truth = self._truths.get(image_id)
        if truth is None:
            raise UnknownImageId(f"no ground truth registered for {image_id!r}")
        return truth

    def _flip_map(self) -> dict[tuple[str, int], str]:
        """Corpus-wide label flips: exactly round(rate * N) instances flip."""
        with self._lock:
            if self._flips is not None:
                return self._flips
            items: list[tuple[str, int, str]] = []
            for image_id in sorted(self._truths):
                for inst in self._truths[image_id].instances:
                    items.append((image_id, inst.index, inst.class_label))
            flips: dict[tuple[str, int], str] = {}
            k = round(self.noise.misclass_rate * len(items))
            if k > 0:
                rng = np.random.default_rng(self.noise.seed)
                order = rng.permutation(len(items))
                for pos in order[:k]:
                    image_id, idx, true_label = items[int(pos)]
                    others = [c for c in CLASSES if c != true_label]
                    flips[(image_id, idx)] = others[int(rng.integers(0, len(others)))]
            self._flips = flips
            return flips

    def _label_for(self, image_id: str, index: int, true_label: str) -> str:
        if self.noise.misclass_rate <= 0:
            return true_label
        return self._flip_map().get((image_id, index), true_label)

    def _semantic_canvas(self, image_id: str) -> np.ndarray:
        with self._lock:
            cached = self._semantic_cache.get(image_id)
            if cached is None:
                cached = self._truths[image_id].semantic_classes()
                self._semantic_cache[image_id] = cached
            return cached

    def _instance_rng(self, image_id: str, index: int) -> np.random.Generator:
        return np.random.default_rng(
            (self.noise.seed & 0x7FFFFFFF, zlib.crc32(image_id.encode()), index))

    # --- StageBackends ---------------------------------------------------------

    def semseg(self, image: np.ndarray, image_id: str, frame: SemsegFrame) -> SemsegResult:
        classes = self._semantic_canvas(image_id)
        crop = frame.crop1.crop(classes)
        rw = max(1, int(math.floor(frame.crop1.w * frame.scale + 0.5)))
        rh = max(1, int(math.floor(frame.crop1.h * frame.scale + 0.5)))
        resized = cv2.resize(crop, (rw, rh), interpolation=cv2.INTER_NEAREST)
        dim = image.shape[0]
        canvas = np.zeros((dim, dim), dtype=np.uint8)
        canvas[:min(rh, dim), :min(rw, dim)] = resized[:dim, :dim]
        if 0.0 < self.noise.iou_degrade < 1.0:
            rng = self._instance_rng(image_id, -1)
            fg, pad = _degrade_mask(canvas > 0, self.noise.iou_degrade, rng)
            if pad:
                fg = fg[pad:-pad, pad:-pad]
            overlap = (canvas == 2) & fg
            canvas = fg.astype(np.uint8)
            canvas[overlap] = 2
        return SemsegResult(classes=canvas, model_version=ORACLE_MODEL_VERSION)

    def instances(self, image: np.ndarray, image_id: str, angle_tag: int,
                  frame: InstanceFrame) -> InstancesResult:
        truth = self._truth(image_id)
        ox, oy = frame.origin
        # for the rotated pass the request raster IS the rotated canvas
        rot_h, rot_w = image.shape
        detections: list[Detection] = []
        for inst in truth.instances:
            mask = inst.mask
            bbox = inst.bbox
            if 0.0 < self.noise.iou_degrade < 1.0:
                rng = self._instance_rng(image_id, inst.index)
                mask, pad = _degrade_mask(mask, self.noise.iou_degrade, rng)
                tight = mask_bbox(mask)
                if tight is None:
                    continue
                bbox = Rect(max(0, bbox.x0 - pad + tight.x0),
                            max(0, bbox.y0 - pad + tight.y0), tight.w, tight.h)
                mask = tight.crop(mask)
            # into crop2-local coordinates
            lx0 = bbox.x0 - ox
            ly0 = bbox.y0 - oy
            det = self._clip_to_frame(mask, lx0, ly0,
                                      image.shape if frame.rotation is None else None)
            if det is None:
                continue
            if frame.rotation is not None:
                det = warp_detection(det, frame.rotation, rot_w, rot_h)
                if det is None:
                    continue
            detections.append(det)
        return InstancesResult(detections=detections, model_version=ORACLE_MODEL_VERSION)

    @staticmethod
    def _clip_to_frame(mask: np.ndarray, lx0: int, ly0: int,
                       frame_shape: tuple[int, int] | None) -> Detection | None:
        """Place a local mask at (lx0, ly0), clipping to the frame if given."""
        h, w = mask.shape
        if frame_shape is None:
            if lx0 < 0 or ly0 < 0:
                # clip at the frame origin only; rotation handles the rest
                cx = max(0, -lx0)
                cy = max(0, -ly0)
                mask = mask[cy:, cx:]
                lx0, ly0 = max(0, lx0), max(0, ly0)
                if mask.size == 0 or not mask.any():
                    return None
            return Detection(mask=mask.copy(), bbox=Rect(lx0, ly0, mask.shape[1], mask.shape[0]),
                             score=1.0)
        fh, fw = frame_shape
        x0, y0 = max(0, lx0), max(0, ly0)
        x1, y1 = min(fw, lx0 + w), min(fh, ly0 + h)
        if x1 <= x0 or y1 <= y0:
            return None
        clipped = mask[y0 - ly0:y1 - ly0, x0 - lx0:x1 - lx0]
        tight = mask_bbox(clipped)
        if tight is None:
            return None
        return Detection(mask=tight.crop(clipped).copy(),
                         bbox=Rect(x0 + tight.x0, y0 + tight.y0, tight.w, tight.h),
                         score=1.0)

    def dedup(self, detections: list[Detection], semantic: np.ndarray | None,
              image_id: str, params: CascadeParams) -> list[Detection]:
        # ground-truth masks are already exact and duplicate-free after the
        # two-angle merge; intersecting with the upscaled semantic mask would
        # only quantize their boundaries
        return list(detections)

    def classify(self, patch: np.ndarray, mask: np.ndarray, augmented: bool,
                 image_id: str, origin: tuple[int, int]) -> ClassifyResult:
        truth = self._truth(image_id)
        det = Detection(mask=np.asarray(mask, dtype=bool),
                        bbox=Rect(max(0, origin[0]), max(0, origin[1]),
                                  mask.shape[1], mask.shape[0]), score=1.0)
        best_idx, best_inter = -1, 0
        for inst in truth.instances:
            gt_det = Detection(mask=inst.mask, bbox=inst.bbox, score=1.0)
            inter = _intersection(det, gt_det)
            if inter > best_inter:
                best_idx, best_inter = inst.index, inter
        if best_idx < 0:
            return ClassifyResult(class_probs=[1.0 / len(CLASSES)] * len(CLASSES),
                                  rotation_sin=0.0, rotation_cos=1.0,
                                  model_version=ORACLE_MODEL_VERSION)
        inst = truth.instances[best_idx]
        label = self._label_for(image_id, inst.index, inst.class_label)
        probs = [0.0] * len(CLASSES)
        probs[CLASS_INDEX[label]] = 1.0
        theta = math.radians(inst.angle_degrees)
        return ClassifyResult(class_probs=probs,
                              rotation_sin=math.sin(theta),
                              rotation_cos=math.cos(theta),
                              model_version=ORACLE_MODEL_VERSION)


def _intersection(a: Detection, b: Detection) -> int:
    ix0 = max(a.bbox.x0, b.bbox.x0)
    iy0 = max(a.bbox.y0, b.bbox.y0)
    ix1 = min(a.bbox.x1, b.bbox.x1)
    iy1 = min(a.bbox.y1, b.bbox.y1)
    if ix1 <= ix0 or iy1 <= iy0:
        return 0
    wa = a.mask[iy0 - a.bbox.y0:iy1 - a.bbox.y0, ix0 - a.bbox.x0:ix1 - a.bbox.x0]
    wb = b.mask[iy0 - b.bbox.y0:iy1 - b.bbox.y0, ix0 - b.bbox.x0:ix1 - b.bbox.x0]
    return int(np.count_nonzero(wa & wb))
