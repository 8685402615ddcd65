"""Pure raster primitives used by every pipeline stage.

Conventions used throughout the library:

* a grayscale raster is a 2-D ``uint8`` numpy array, shape ``(height, width)``,
  0 = black, 255 = white; chromosomes are darker than the background;
* a binary mask is a 2-D ``bool`` array of the same layout, True = foreground;
* pixel coordinates are ``(x, y)`` with x = column, y = row; the top-left
  pixel is ``(0, 0)``.

All functions are pure: they never mutate their inputs and are safe to call
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage

from .errors import DegenerateHistogram, DimensionMismatch, TargetSmallerThanSource

__all__ = [
    "Rect",
    "AffineTransform",
    "Component",
    "LabeledComponents",
    "otsu_threshold",
    "connected_components",
    "resize_constrained",
    "resize_mask_nearest",
    "pad_edge_replicate",
    "rotation_canvas",
    "rotate_expand",
    "warp_mask",
    "mask_iou",
    "mask_bbox",
    "trace_boundary",
    "rasterize_polygon",
    "round_half_up",
]


def round_half_up(x: float) -> int:
    """Round to nearest integer, .5 away from zero (no banker's rounding)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle: inclusive top-left corner plus extent."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1:
            raise ValueError(f"Rect extent must be >= 1, got {self.w}x{self.h}")
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"Rect origin must be >= 0, got ({self.x0}, {self.y0})")

    @property
    def x1(self) -> int:
        """Exclusive right edge."""
        return self.x0 + self.w

    @property
    def y1(self) -> int:
        """Exclusive bottom edge."""
        return self.y0 + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def expand(self, margin: int) -> "Rect":
        """Grow by `margin` on every side, clipping the origin at zero."""
        x0 = max(0, self.x0 - margin)
        y0 = max(0, self.y0 - margin)
        return Rect(x0, y0, self.x1 + margin - x0, self.y1 + margin - y0)

    def clamp(self, width: int, height: int) -> "Rect":
        """Intersect with the image bounds ``[0, width) x [0, height)``."""
        x0 = min(max(self.x0, 0), width - 1)
        y0 = min(max(self.y0, 0), height - 1)
        x1 = max(min(self.x1, width), x0 + 1)
        y1 = max(min(self.y1, height), y0 + 1)
        return Rect(x0, y0, x1 - x0, y1 - y0)

    def contains(self, other: "Rect") -> bool:
        return (self.x0 <= other.x0 and self.y0 <= other.y0
                and self.x1 >= other.x1 and self.y1 >= other.y1)

    def union(self, other: "Rect") -> "Rect":
        x0 = min(self.x0, other.x0)
        y0 = min(self.y0, other.y0)
        return Rect(x0, y0, max(self.x1, other.x1) - x0, max(self.y1, other.y1) - y0)

    def crop(self, image: np.ndarray) -> np.ndarray:
        """View of `image` restricted to this rectangle."""
        return image[self.y0:self.y1, self.x0:self.x1]


class AffineTransform:
    """2x3 affine map from source (x, y) to destination coordinates."""

    def __init__(self, matrix: np.ndarray):
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"affine matrix must be 2x3, got {m.shape}")
        if abs(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]) < 1e-12:
            raise ValueError("affine transform must be invertible")
        self.matrix = m

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "AffineTransform":
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty]]))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map an (N, 2) array of (x, y) points; returns float64 (N, 2)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts @ self.matrix[:, :2].T + self.matrix[:, 2]

    def invert(self) -> "AffineTransform":
        a = self.matrix[:, :2]
        t = self.matrix[:, 2]
        a_inv = np.linalg.inv(a)
        return AffineTransform(np.hstack([a_inv, (-a_inv @ t)[:, None]]))

    def compose(self, inner: "AffineTransform") -> "AffineTransform":
        """Return self ∘ inner (apply `inner` first, then self)."""
        a = self.matrix[:, :2] @ inner.matrix[:, :2]
        t = self.matrix[:, :2] @ inner.matrix[:, 2] + self.matrix[:, 2]
        return AffineTransform(np.hstack([a, t[:, None]]))


@dataclass(frozen=True)
class Component:
    """One connected component: contiguous id, pixel count, tight bbox."""

    id: int
    area: int
    bbox: Rect


@dataclass
class LabeledComponents:
    """Row-major component labels (0 = background) plus per-component stats."""

    labels: np.ndarray
    components: list[Component]


def _as_raster(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a nonempty 2-D grayscale raster, got shape {img.shape}")
    return img


def otsu_threshold(image: np.ndarray) -> int:
    """Between-class-variance-maximizing intensity threshold in [0, 254].

    Foreground convention for chromosome imagery is intensity <= t (dark
    objects on a light background). Ties are broken toward the lowest t.

    Raises:
        DegenerateHistogram: if every pixel shares one intensity.
    """
    img = _as_raster(image)
    hist = np.bincount(img.ravel(), minlength=256).astype(np.float64)
    if np.count_nonzero(hist) < 2:
        raise DegenerateHistogram("image has a single intensity value")

    total = hist.sum()
    levels = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(hist)                      # pixels with intensity <= t
    m0 = np.cumsum(hist * levels)             # intensity mass <= t
    mu_total = m0[-1]

    # between-class variance for t = 0..254; undefined where a class is empty
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    var_b = np.zeros(256)
    num = (mu_total * w0 - m0 * total) ** 2
    den = w0 * w1 * total * total
    var_b[valid] = num[valid] / den[valid]
    return int(np.argmax(var_b[:255]))        # argmax returns the lowest tie


_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT_8 = np.ones((3, 3), dtype=bool)


def connected_components(mask: np.ndarray, connectivity: int = 8) -> LabeledComponents:
    """Label foreground under 4- or 8-adjacency.

    Labels are contiguous 1..K ordered by first row-major encounter. An empty
    mask yields zero components.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    m = np.asarray(mask, dtype=bool)
    structure = _STRUCT_8 if connectivity == 8 else _STRUCT_4
    raw, count = ndimage.label(m, structure=structure)
    if count == 0:
        return LabeledComponents(labels=np.zeros(m.shape, dtype=np.int32), components=[])

    # relabel to first-encounter row-major order
    flat = raw.ravel()
    first_seen = np.full(count + 1, flat.size, dtype=np.int64)
    np.minimum.at(first_seen, flat, np.arange(flat.size, dtype=np.int64))
    order = np.argsort(first_seen[1:], kind="stable")  # old label-1 -> rank
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, count + 1, dtype=np.int32)
    labels = remap[raw]

    areas = np.bincount(labels.ravel(), minlength=count + 1)
    slices = ndimage.find_objects(labels, max_label=count)
    components = []
    for cid in range(1, count + 1):
        sy, sx = slices[cid - 1]
        bbox = Rect(int(sx.start), int(sy.start), int(sx.stop - sx.start), int(sy.stop - sy.start))
        components.append(Component(id=cid, area=int(areas[cid]), bbox=bbox))
    return LabeledComponents(labels=labels, components=components)


def _constrained_scale(w: int, h: int, min_dim: int, max_dim: int) -> float:
    if min(w, h) > max_dim:
        # both sides already exceed the cap: shrink until the long side fits
        return max_dim / max(w, h)
    s = min_dim / min(w, h)
    if round_half_up(max(w, h) * s) > max_dim:
        s = max_dim / max(w, h)
    return s


def resize_constrained(image: np.ndarray, min_dim: int, max_dim: int) -> tuple[np.ndarray, float]:
    """Scale so the short side reaches `min_dim` without the long side passing `max_dim`.

    Bilinear resampling. Returns the resized raster and the exact scale
    applied; output dimensions are ``round(w*s) x round(h*s)`` and never
    exceed `max_dim` on either side.
    """
    if min_dim > max_dim:
        raise ValueError(f"min_dim {min_dim} > max_dim {max_dim}")
    img = _as_raster(image)
    h, w = img.shape
    s = _constrained_scale(w, h, min_dim, max_dim)
    out_w = max(1, round_half_up(w * s))
    out_h = max(1, round_half_up(h * s))
    resized = cv2.resize(img, (out_w, out_h), interpolation=cv2.INTER_LINEAR)
    return resized, s


def resize_mask_nearest(mask: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Nearest-neighbor mask resize; masks must stay binary."""
    m = np.asarray(mask, dtype=np.uint8)
    out = cv2.resize(m, (out_w, out_h), interpolation=cv2.INTER_NEAREST)
    return out.astype(bool)


def pad_edge_replicate(image: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Pad to (target_w, target_h) with the source in the top-left corner.

    Padded columns replicate the rightmost source column, padded rows the
    bottom source row; the corner replicates the bottom-right pixel.
    """
    img = _as_raster(image)
    h, w = img.shape
    if target_w < w or target_h < h:
        raise TargetSmallerThanSource(
            f"target {target_w}x{target_h} smaller than source {w}x{h}")
    if target_w == w and target_h == h:
        return img.copy()
    return np.pad(img, ((0, target_h - h), (0, target_w - w)), mode="edge")


def rotation_canvas(width: int, height: int, degrees: float) -> tuple[int, int, AffineTransform]:
    """Expanded canvas size and source->canvas transform for a rotation.

    The canvas is the axis-aligned bounding box of the source rectangle
    rotated by `degrees` about its center.
    """
    theta = math.radians(degrees)
    c, s = math.cos(theta), math.sin(theta)
    # snap near-exact right angles so canvas sizes stay exact
    if abs(c) < 1e-12:
        c = 0.0
    if abs(s) < 1e-12:
        s = 0.0
    new_w = math.ceil(width * abs(c) + height * abs(s) - 1e-9)
    new_h = math.ceil(width * abs(s) + height * abs(c) - 1e-9)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    nx, ny = (new_w - 1) / 2.0, (new_h - 1) / 2.0
    matrix = np.array([
        [c, -s, nx - c * cx + s * cy],
        [s, c, ny - s * cx - c * cy],
    ])
    return new_w, new_h, AffineTransform(matrix)


def rotate_expand(image: np.ndarray, degrees: float) -> tuple[np.ndarray, AffineTransform]:
    """Rotate about the raster center, expanding the canvas to fit.

    The canvas is the axis-aligned bounding box of the rotated source
    rectangle; background fills with the edge-nearest intensity. The returned
    transform maps source (x, y) to rotated-canvas coordinates.
    """
    img = _as_raster(image)
    if degrees % 360 == 0:
        return img.copy(), AffineTransform.identity()
    h, w = img.shape
    new_w, new_h, transform = rotation_canvas(w, h, degrees)
    rotated = cv2.warpAffine(
        img, transform.matrix, (new_w, new_h),
        flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE)
    return rotated, transform


def warp_mask(mask: np.ndarray, transform: AffineTransform, out_w: int, out_h: int) -> np.ndarray:
    """Apply an affine transform to a mask with nearest-neighbor sampling.

    Pixels mapping from outside the source become background.
    """
    m = np.asarray(mask, dtype=np.uint8)
    out = cv2.warpAffine(m, transform.matrix, (out_w, out_h),
                         flags=cv2.INTER_NEAREST,
                         borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    return out.astype(bool)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two same-shaped masks; 0 when both empty."""
    ma = np.asarray(a, dtype=bool)
    mb = np.asarray(b, dtype=bool)
    if ma.shape != mb.shape:
        raise DimensionMismatch(f"mask shapes differ: {ma.shape} vs {mb.shape}")
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 0.0
    return np.count_nonzero(ma & mb) / union


def mask_bbox(mask: np.ndarray) -> Rect | None:
    """Tight bounding rectangle of a mask's foreground, or None if empty."""
    m = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(m.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(m.any(axis=0))
    return Rect(int(cols[0]), int(rows[0]),
                int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


# Moore neighborhood in clockwise order starting from west: used by the
# boundary tracer below.
_MOORE = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)]


def trace_boundary(mask: np.ndarray) -> np.ndarray:
    """Moore boundary trace of the largest 8-connected region.

    Returns an (N, 2) int array of (x, y) boundary pixel coordinates in
    clockwise walk order. Rasterizing the polygon with
    :func:`rasterize_polygon` reproduces the region within 1 px.
    """
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise ValueError("cannot trace an empty mask")
    labeled = connected_components(m, connectivity=8)
    largest = max(labeled.components, key=lambda comp: comp.area)
    region = labeled.labels == largest.id
    h, w = region.shape

    # start pixel: first foreground in row-major order (np.nonzero order)
    ys, xs = np.nonzero(region)
    start = (int(xs[0]), int(ys[0]))
    if largest.area == 1:
        return np.array([start], dtype=np.int64)

    def is_fg(x: int, y: int) -> bool:
        return 0 <= x < w and 0 <= y < h and bool(region[y, x])

    # Moore trace: state is (pixel, backtrack background pixel). The scan of
    # p's neighborhood starts clockwise just after the backtrack. Terminate on
    # re-entering the start state (Jacob's stopping criterion).
    p = start
    b = (start[0] - 1, start[1])  # entered from the west by scan convention
    seen = {(p, b)}
    boundary = [start]
    for _ in range(8 * h * w + 8):
        d0 = _MOORE.index((b[0] - p[0], b[1] - p[1]))
        for k in range(1, 9):
            d = (d0 + k) % 8
            cand = (p[0] + _MOORE[d][0], p[1] + _MOORE[d][1])
            if is_fg(*cand):
                prev = (d0 + k - 1) % 8
                b = (p[0] + _MOORE[prev][0], p[1] + _MOORE[prev][1])
                p = cand
                break
        else:
            break  # no foreground neighbor: defensive, area 1 handled above
        if (p, b) in seen:
            break
        seen.add((p, b))
        boundary.append(p)
    else:
        raise RuntimeError("boundary trace failed to terminate")
    return np.array(boundary, dtype=np.int64)


def rasterize_polygon(polygon: np.ndarray, width: int, height: int) -> np.ndarray:
    """Fill a pixel-coordinate polygon, boundary pixels included.

    Inverse of :func:`trace_boundary` up to 1 px: tracing a mask and
    rasterizing the result reproduces solid regions. Vertices outside the
    canvas are clipped.
    """
    pts = np.asarray(polygon, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise ValueError(f"polygon must be (N, 2), got {pts.shape}")
    canvas = np.zeros((height, width), dtype=np.uint8)
    ipts = np.rint(pts).astype(np.int32).reshape(-1, 1, 2)
    cv2.fillPoly(canvas, [ipts], 1)
    cv2.polylines(canvas, [ipts], isClosed=True, color=1, thickness=1)
    return canvas.astype(bool)
