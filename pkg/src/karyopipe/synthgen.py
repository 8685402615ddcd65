"""Deterministic synthetic metaphase-spread generator with exact ground truth.

Each spread renders bent-capsule chromosome silhouettes with transverse
banding on a light background. Visual realism is not a goal: the contract is
geometric and statistical ground truth (instance masks, class labels,
orientation angles) that exercises every pipeline branch — disjoint,
touching, overlapping, and border-adjacent instances.

Rendering uses hard edges only (no antialiasing): every rendered pixel is
either background or a band intensity at least 40 below background, so
threshold-based stages recover silhouettes exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy import ndimage

from .chromosomes import CLASSES
from .errors import PlacementFailure
from .imaging import Rect, mask_bbox, rotation_canvas

__all__ = [
    "SpreadStyle",
    "SyntheticSpec",
    "GroundTruthInstance",
    "GroundTruth",
    "generate_spread",
    "default_class_multiset",
    "expected_mask_area",
    "nominal_size",
]

# Nominal capsule dimensions per class at the default 1830 px canvas scale.
# Lengths decrease monotonically 1..22; X sits with the mid-size C group,
# Y below the G group.
_LEN_MAX, _LEN_MIN = 300.0, 80.0
_HALFW_MAX, _HALFW_MIN = 13.0, 8.0


def nominal_size(label: str) -> tuple[float, float]:
    """(length, half_width) of a class's capsule before jitter."""
    if label == "X":
        rank = 6  # same size model as class 7 (C group)
    elif label == "Y":
        return 64.0, 7.0  # smallest of all
    else:
        rank = int(label) - 1
    frac = rank / 21.0
    length = _LEN_MAX - frac * (_LEN_MAX - _LEN_MIN)
    half_w = _HALFW_MAX - frac * (_HALFW_MAX - _HALFW_MIN)
    return length, half_w


def expected_mask_area(label: str) -> float:
    """Analytic capsule area for a class; the classifier stub's size table."""
    length, r = nominal_size(label)
    return length * 2.0 * r + math.pi * r * r


def default_class_multiset() -> list[str]:
    """Two of each autosome plus XX: the 46,XX complement."""
    labels = []
    for c in range(1, 23):
        labels += [str(c), str(c)]
    labels += ["X", "X"]
    return labels


@dataclass(frozen=True)
class SpreadStyle:
    """Shape / banding knobs; defaults keep silhouettes threshold-separable."""

    band_count_range: tuple[int, int] = (4, 9)
    band_intensity_range: tuple[int, int] = (70, 140)
    bow_fraction: float = 0.04        # centerline bow as a fraction of length
    size_jitter: float = 0.04         # +- relative jitter on length and width
    min_gap: int = 4                  # clearance between undeclared neighbors;
                                      # wide enough that rotation blur cannot
                                      # fuse separate silhouettes
    border_margin: int = 24           # clearance from the canvas edge
    spread_fraction: float = 0.72     # instances cluster in this central band,
                                      # like a metaphase in the field of view


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int = 0
    canvas_width: int = 1830
    canvas_height: int = 1830
    class_labels: tuple[str, ...] = field(default_factory=lambda: tuple(default_class_multiset()))
    overlap_pairs: int = 0
    touching_pairs: int = 0
    background: int = 235
    border_adjacent: bool = False
    style: SpreadStyle = field(default_factory=SpreadStyle)
    tags: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        count = len(self.class_labels)
        if self.overlap_pairs < 0 or self.touching_pairs < 0:
            raise ValueError("pair counts must be >= 0")
        if self.overlap_pairs + self.touching_pairs > count // 2:
            raise ValueError("declared pairs exceed floor(count / 2)")
        bad = [c for c in self.class_labels if c not in CLASSES]
        if bad:
            raise ValueError(f"unknown class labels: {bad}")

    @property
    def chromosome_count(self) -> int:
        return len(self.class_labels)


@dataclass
class GroundTruthInstance:
    index: int
    class_label: str
    angle_degrees: float            # long axis vs vertical, in (-90, 90]
    centroid: tuple[float, float]   # (x, y) canvas coords
    bbox: Rect                      # placement of `mask` on the canvas
    mask: np.ndarray                # bool, bbox-local

    def canvas_mask(self, width: int, height: int) -> np.ndarray:
        out = np.zeros((height, width), dtype=bool)
        out[self.bbox.y0:self.bbox.y1, self.bbox.x0:self.bbox.x1] = self.mask
        return out


@dataclass
class GroundTruth:
    spec: SyntheticSpec
    instances: list[GroundTruthInstance]
    overlap_pairs: list[tuple[int, int]]
    touching_pairs: list[tuple[int, int]]

    def semantic_classes(self) -> np.ndarray:
        """Canvas-sized class array: 0 background, 1 chromosome, 2 overlap."""
        w, h = self.spec.canvas_width, self.spec.canvas_height
        counts = np.zeros((h, w), dtype=np.uint8)
        for inst in self.instances:
            counts[inst.bbox.y0:inst.bbox.y1, inst.bbox.x0:inst.bbox.x1] += inst.mask
        classes = np.zeros((h, w), dtype=np.uint8)
        classes[counts == 1] = 1
        classes[counts >= 2] = 2
        return classes


def _build_instance(rng: np.random.Generator, label: str, style: SpreadStyle,
                    angle: float) -> tuple[np.ndarray, np.ndarray]:
    """Rotated (intensity_patch, mask) pair for one chromosome.

    The patch background is the sentinel 0; foreground pixels carry band
    intensities. Nearest-neighbor warping keeps edges hard.
    """
    length, half_w = nominal_size(label)
    length *= 1.0 + rng.uniform(-style.size_jitter, style.size_jitter)
    half_w *= 1.0 + rng.uniform(-style.size_jitter, style.size_jitter)
    length = max(12.0, length)
    r = max(2, int(round(half_w)))
    bow = style.bow_fraction * length * rng.uniform(0.3, 1.0) * rng.choice([-1.0, 1.0])

    pad = r + 2
    loc_h = int(math.ceil(length)) + 2 * pad
    loc_w = 2 * (int(math.ceil(abs(bow))) + pad)

    # upright centerline with a sinusoidal bow
    n_pts = max(8, int(length / 4))
    t = np.linspace(0.0, 1.0, n_pts)
    cx = loc_w / 2.0 + bow * np.sin(math.pi * t)
    cy = pad + t * length
    pts = np.stack([cx, cy], axis=1).astype(np.int32)

    line = np.zeros((loc_h, loc_w), dtype=np.uint8)
    cv2.polylines(line, [pts.reshape(-1, 1, 2)], False, 1, 1)
    dist = ndimage.distance_transform_edt(line == 0)
    mask = dist <= r

    # transverse bands: intensity varies along the axis
    lo, hi = style.band_intensity_range
    n_bands = int(rng.integers(style.band_count_range[0], style.band_count_range[1] + 1))
    band_values = rng.integers(lo, hi + 1, size=n_bands)
    ys = np.arange(loc_h)
    band_idx = np.clip(((ys - pad) / max(length, 1.0) * n_bands).astype(int), 0, n_bands - 1)
    patch = np.where(mask, band_values[band_idx][:, None], 0).astype(np.uint8)

    if angle % 360 != 0:
        out_w, out_h, transform = rotation_canvas(loc_w, loc_h, -angle)
        patch = cv2.warpAffine(patch, transform.matrix, (out_w, out_h),
                               flags=cv2.INTER_NEAREST,
                               borderMode=cv2.BORDER_CONSTANT, borderValue=0)

    bbox = mask_bbox(patch > 0)
    patch = bbox.crop(patch)
    return patch, patch > 0


def _window(canvas: np.ndarray, x0: int, y0: int, w: int, h: int) -> np.ndarray:
    return canvas[y0:y0 + h, x0:x0 + w]


class _Placer:
    """Tracks occupancy and paints accepted instances."""

    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self.canvas = np.full((spec.canvas_height, spec.canvas_width),
                              spec.background, dtype=np.uint8)
        self.occupied = np.zeros(self.canvas.shape, dtype=bool)
        gap = spec.style.min_gap
        self._gap_kernel = np.ones((2 * gap + 1, 2 * gap + 1), np.uint8)

    def random_origin(self, rng: np.random.Generator, pw: int, ph: int,
                      at_border: bool = False) -> tuple[int, int]:
        h, w = self.canvas.shape
        m = self.spec.style.border_margin
        if at_border:
            # within 5 px of a randomly chosen edge
            edge = int(rng.integers(0, 4))
            d = int(rng.integers(0, 4))
            if edge == 0:
                return d, int(rng.integers(m, max(m + 1, h - ph - m)))
            if edge == 1:
                return w - pw - d, int(rng.integers(m, max(m + 1, h - ph - m)))
            if edge == 2:
                return int(rng.integers(m, max(m + 1, w - pw - m))), d
            return int(rng.integers(m, max(m + 1, w - pw - m))), h - ph - d
        # cluster placements centrally, leaving at least the border margin
        frac = self.spec.style.spread_fraction
        mx = max(m, int(w * (1.0 - frac) / 2))
        my = max(m, int(h * (1.0 - frac) / 2))
        x_hi = w - pw - mx
        y_hi = h - ph - my
        if x_hi <= mx or y_hi <= my:
            # fall back to the plain border margin before giving up
            mx, my = m, m
            x_hi = w - pw - mx
            y_hi = h - ph - my
            if x_hi <= mx or y_hi <= my:
                raise PlacementFailure("instance larger than usable canvas")
        return int(rng.integers(mx, x_hi)), int(rng.integers(my, y_hi))

    def collides(self, mask: np.ndarray, x0: int, y0: int) -> bool:
        h, w = self.canvas.shape
        ph, pw = mask.shape
        if x0 < 0 or y0 < 0 or x0 + pw > w or y0 + ph > h:
            return True
        # dilate on a padded canvas so the clearance zone extends past the
        # tight bbox; otherwise edge pixels never see their neighbors
        gap = self.spec.style.min_gap
        padded = np.pad(mask.astype(np.uint8), gap)
        grown = cv2.dilate(padded, self._gap_kernel).astype(bool)
        wx0, wy0 = x0 - gap, y0 - gap
        cx0, cy0 = max(0, wx0), max(0, wy0)
        cx1, cy1 = min(w, x0 + pw + gap), min(h, y0 + ph + gap)
        occupied = self.occupied[cy0:cy1, cx0:cx1]
        window = grown[cy0 - wy0:cy1 - wy0, cx0 - wx0:cx1 - wx0]
        return bool((occupied & window).any())

    def paint(self, patch: np.ndarray, mask: np.ndarray, x0: int, y0: int) -> None:
        ph, pw = mask.shape
        win = _window(self.canvas, x0, y0, pw, ph)
        win[mask] = patch[mask]
        _window(self.occupied, x0, y0, pw, ph)[mask] = True


def _intersection_count(mask_a: np.ndarray, box_a: Rect, mask_b: np.ndarray,
                        x0: int, y0: int) -> int:
    bx = Rect(0, 0, mask_b.shape[1], mask_b.shape[0])
    ix0 = max(box_a.x0, x0)
    iy0 = max(box_a.y0, y0)
    ix1 = min(box_a.x1, x0 + bx.w)
    iy1 = min(box_a.y1, y0 + bx.h)
    if ix1 <= ix0 or iy1 <= iy0:
        return 0
    a = mask_a[iy0 - box_a.y0:iy1 - box_a.y0, ix0 - box_a.x0:ix1 - box_a.x0]
    b = mask_b[iy0 - y0:iy1 - y0, ix0 - x0:ix1 - x0]
    return int(np.count_nonzero(a & b))


def _place_pair(placer: _Placer, rng: np.random.Generator, spec: SyntheticSpec,
                patch_a, mask_a, patch_b, mask_b, mode: str,
                max_attempts: int = 60):
    """Place two instances crossing ('overlap') or tangent ('touching').

    Returns ((ax0, ay0), (bx0, by0)). Placement of the pair must not contact
    anything already on the canvas.
    """
    for _ in range(max_attempts):
        ah, aw = mask_a.shape
        try:
            ax0, ay0 = placer.random_origin(rng, aw + 120, ah + 120)
        except PlacementFailure:
            raise
        ax0 += 60
        ay0 += 60
        if placer.collides(mask_a, ax0, ay0):
            continue
        box_a = Rect(ax0, ay0, aw, ah)
        acx, acy = ax0 + aw / 2.0, ay0 + ah / 2.0
        bh, bw = mask_b.shape
        direction = rng.uniform(0, 2 * math.pi)
        dx, dy = math.cos(direction), math.sin(direction)
        area_small = min(mask_a.sum(), mask_b.sum())

        # slide b from a's center outward until the relation holds
        found = None
        for step in range(0, 2 * max(aw, ah, bw, bh)):
            bx0 = int(round(acx - bw / 2.0 + dx * step))
            by0 = int(round(acy - bh / 2.0 + dy * step))
            inter = _intersection_count(mask_a, box_a, mask_b, bx0, by0)
            if mode == "overlap":
                if inter and 0.05 * area_small <= inter <= 0.20 * area_small:
                    found = (bx0, by0)
                    break
                if inter == 0 and step > max(aw, ah):
                    break
            elif inter == 0:
                # touching: first disjoint origin on the outward slide is
                # 8-adjacent to a (1 px per step)
                grown = cv2.dilate(mask_a.astype(np.uint8), np.ones((3, 3), np.uint8)).astype(bool)
                if _intersection_count(grown, box_a, mask_b, bx0, by0):
                    found = (bx0, by0)
                break
        if found is None:
            continue
        bx0, by0 = found
        # b must clear everything except a; occupancy excludes the unpainted a
        if placer.collides(mask_b, bx0, by0):
            continue
        placer.paint(patch_a, mask_a, ax0, ay0)
        placer.paint(patch_b, mask_b, bx0, by0)
        return (ax0, ay0), (bx0, by0)
    raise PlacementFailure(f"could not stage a {mode} pair")


def generate_spread(spec: SyntheticSpec) -> tuple[np.ndarray, GroundTruth]:
    """Render one spread. Deterministic: equal specs give identical output."""
    rng = np.random.default_rng(spec.seed)
    placer = _Placer(spec)
    style = spec.style

    labels = list(spec.class_labels)
    angles = [float(rng.uniform(-90.0, 90.0)) for _ in labels]
    built = [_build_instance(rng, lab, style, ang) for lab, ang in zip(labels, angles)]

    placements: list[tuple[int, int] | None] = [None] * len(labels)
    overlap_ids: list[tuple[int, int]] = []
    touching_ids: list[tuple[int, int]] = []

    idx = 0
    for _ in range(spec.overlap_pairs):
        a, b = idx, idx + 1
        pa, pb = _place_pair(placer, rng, spec, *built[a], *built[b], mode="overlap")
        placements[a], placements[b] = pa, pb
        overlap_ids.append((a, b))
        idx += 2
    for _ in range(spec.touching_pairs):
        a, b = idx, idx + 1
        pa, pb = _place_pair(placer, rng, spec, *built[a], *built[b], mode="touching")
        placements[a], placements[b] = pa, pb
        touching_ids.append((a, b))
        idx += 2

    order = list(range(idx, len(labels)))
    border_idx = order[-1] if (spec.border_adjacent and order) else None
    for i in order:
        patch, mask = built[i]
        ph, pw = mask.shape
        placed = False
        for _ in range(200):
            x0, y0 = placer.random_origin(rng, pw, ph, at_border=(i == border_idx))
            if not placer.collides(mask, x0, y0):
                placer.paint(patch, mask, x0, y0)
                placements[i] = (x0, y0)
                placed = True
                break
        if not placed:
            raise PlacementFailure(f"no room for instance {i} ({labels[i]})")

    instances = []
    for i, (lab, ang, (patch, mask)) in enumerate(zip(labels, angles, built)):
        x0, y0 = placements[i]
        ys, xs = np.nonzero(mask)
        centroid = (float(x0 + xs.mean()), float(y0 + ys.mean()))
        instances.append(GroundTruthInstance(
            index=i, class_label=lab, angle_degrees=ang, centroid=centroid,
            bbox=Rect(x0, y0, mask.shape[1], mask.shape[0]), mask=mask))

    truth = GroundTruth(spec=spec, instances=instances,
                        overlap_pairs=overlap_ids, touching_pairs=touching_ids)
    return placer.canvas, truth
