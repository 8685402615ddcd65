"""Raster primitive tests, each non-trivial expectation backed by a brute-force oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from karyopipe.errors import DegenerateHistogram, DimensionMismatch, TargetSmallerThanSource
from karyopipe.imaging import (
    AffineTransform,
    Rect,
    connected_components,
    mask_iou,
    otsu_threshold,
    pad_edge_replicate,
    rasterize_polygon,
    resize_constrained,
    rotate_expand,
    trace_boundary,
)


# --- oracles ----------------------------------------------------------------

def otsu_by_pixel_partition(image):
    """Naive Otsu: partition the pixel list at every t and measure directly."""
    pixels = image.ravel().astype(np.float64)
    best_t, best_var = None, -1.0
    n = pixels.size
    for t in range(255):
        lo = pixels[pixels <= t]
        hi = pixels[pixels > t]
        if lo.size == 0 or hi.size == 0:
            var = 0.0
        else:
            w0, w1 = lo.size / n, hi.size / n
            var = w0 * w1 * (lo.mean() - hi.mean()) ** 2
        if var > best_var + 1e-12:
            best_var, best_t = var, t
    return best_t


def flood_fill_components(mask, connectivity):
    """Brute-force labeling by BFS, first-encounter row-major order."""
    h, w = mask.shape
    if connectivity == 8:
        nbrs = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
    else:
        nbrs = [(0, -1), (-1, 0), (1, 0), (0, 1)]
    labels = np.zeros((h, w), dtype=int)
    comps = []
    next_id = 1
    for y in range(h):
        for x in range(w):
            if mask[y, x] and labels[y, x] == 0:
                stack = [(x, y)]
                labels[y, x] = next_id
                pixels = []
                while stack:
                    cx, cy = stack.pop()
                    pixels.append((cx, cy))
                    for dx, dy in nbrs:
                        nx, ny = cx + dx, cy + dy
                        if 0 <= nx < w and 0 <= ny < h and mask[ny, nx] and labels[ny, nx] == 0:
                            labels[ny, nx] = next_id
                            stack.append((nx, ny))
                px = [p[0] for p in pixels]
                py = [p[1] for p in pixels]
                comps.append({
                    "id": next_id,
                    "area": len(pixels),
                    "bbox": (min(px), min(py), max(px) - min(px) + 1, max(py) - min(py) + 1),
                })
                next_id += 1
    return labels, comps


# --- otsu_threshold ----------------------------------------------------------

class TestOtsu:
    def test_bimodal_extremes_tie_breaks_low(self):
        img = np.zeros((10, 10), dtype=np.uint8)
        img[:, 5:] = 255
        assert otsu_threshold(img) == 0

    def test_constant_image_raises(self):
        with pytest.raises(DegenerateHistogram):
            otsu_threshold(np.full((8, 8), 128, dtype=np.uint8))

    def test_two_clusters_threshold_between_means(self):
        rng = np.random.default_rng(7)
        lo = np.clip(rng.normal(60, 8, 500), 0, 255)
        hi = np.clip(rng.normal(200, 8, 500), 0, 255)
        img = np.concatenate([lo, hi]).astype(np.uint8).reshape(40, 25)
        t = otsu_threshold(img)
        assert 60 < t < 200
        assert t == otsu_by_pixel_partition(img)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_partition_oracle_on_random_images(self, seed):
        rng = np.random.default_rng(seed)
        img = rng.integers(0, 256, size=(20, 20), dtype=np.uint8)
        assert otsu_threshold(img) == otsu_by_pixel_partition(img)

    def test_invariant_under_pixel_permutation(self):
        rng = np.random.default_rng(3)
        img = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
        shuffled = rng.permutation(img.ravel()).reshape(img.shape)
        assert otsu_threshold(img) == otsu_threshold(shuffled)


# --- connected_components ----------------------------------------------------

class TestConnectedComponents:
    def test_empty_mask(self):
        out = connected_components(np.zeros((4, 4), dtype=bool))
        assert out.components == []
        assert not out.labels.any()

    def test_diagonal_adjacency(self):
        mask = np.zeros((3, 3), dtype=bool)
        mask[0, 0] = mask[1, 1] = True
        assert len(connected_components(mask, connectivity=8).components) == 1
        assert connected_components(mask, connectivity=8).components[0].area == 2
        four = connected_components(mask, connectivity=4).components
        assert len(four) == 2 and all(c.area == 1 for c in four)

    def test_block_and_bar(self):
        mask = np.zeros((5, 5), dtype=bool)
        mask[0:2, 0:2] = True     # 2x2 block at (0,0)
        mask[4, 2:5] = True       # 1x3 bar at row 4, cols 2..4
        out = connected_components(mask, connectivity=8)
        assert [c.area for c in out.components] == [4, 3]
        assert out.components[0].bbox == Rect(0, 0, 2, 2)
        assert out.components[1].bbox == Rect(2, 4, 3, 1)

    @pytest.mark.parametrize("connectivity", [4, 8])
    @pytest.mark.parametrize("seed", range(4))
    def test_matches_flood_fill_oracle(self, connectivity, seed):
        rng = np.random.default_rng(seed)
        mask = rng.random((12, 15)) < 0.4
        out = connected_components(mask, connectivity=connectivity)
        labels, comps = flood_fill_components(mask, connectivity)
        assert np.array_equal(out.labels, labels)
        assert len(out.components) == len(comps)
        for got, want in zip(out.components, comps):
            assert got.id == want["id"]
            assert got.area == want["area"]
            assert (got.bbox.x0, got.bbox.y0, got.bbox.w, got.bbox.h) == want["bbox"]

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_areas_sum_to_foreground_count(self, seed):
        rng = np.random.default_rng(seed)
        mask = rng.random((10, 10)) < 0.5
        out = connected_components(mask)
        assert sum(c.area for c in out.components) == int(mask.sum())


# --- resize_constrained ------------------------------------------------------

class TestResizeConstrained:
    def test_large_square_fits_cap(self):
        img = np.zeros((1830, 1830), dtype=np.uint8)
        out, s = resize_constrained(img, 512, 992)
        assert out.shape == (992, 992)
        assert s == 992 / 1830

    def test_min_side_rule(self):
        img = np.zeros((900, 600), dtype=np.uint8)  # h=900, w=600
        out, s = resize_constrained(img, 512, 992)
        assert out.shape == (768, 512)
        assert s == 512 / 600

    def test_cap_branch(self):
        img = np.zeros((1000, 400), dtype=np.uint8)
        out, s = resize_constrained(img, 512, 992)
        assert out.shape == (992, 397)
        assert s == 992 / 1000

    def test_downsizes_already_conforming_square(self):
        img = np.zeros((992, 992), dtype=np.uint8)
        out, s = resize_constrained(img, 512, 992)
        assert out.shape == (512, 512)
        assert s == 512 / 992

    @pytest.mark.parametrize("shape", [(512, 512), (900, 600), (1830, 1830), (1536, 2048), (257, 3000)])
    def test_never_exceeds_max_dim(self, shape):
        out, s = resize_constrained(np.zeros(shape, dtype=np.uint8), 512, 992)
        assert max(out.shape) <= 992
        if min(shape) <= 992 and round(max(shape) * 512 / min(shape)) <= 992:
            assert min(out.shape) == 512


# --- pad_edge_replicate ------------------------------------------------------

class TestPadEdgeReplicate:
    def test_two_by_two_definition(self):
        img = np.array([[1, 2], [3, 4]], dtype=np.uint8)
        out = pad_edge_replicate(img, 3, 3)
        assert np.array_equal(out, np.array([[1, 2, 2], [3, 4, 4], [3, 4, 4]]))

    def test_identity_when_already_sized(self):
        img = np.arange(12, dtype=np.uint8).reshape(3, 4)
        assert np.array_equal(pad_edge_replicate(img, 4, 3), img)

    def test_bottom_rows_replicate_last_row(self):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, size=(768, 512), dtype=np.uint8)
        out = pad_edge_replicate(img, 992, 992)
        assert out.shape == (992, 992)
        assert np.array_equal(out[:768, :512], img)
        assert all(np.array_equal(out[r, :512], img[767]) for r in range(768, 992))
        assert all(np.array_equal(out[:768, c], img[:, 511]) for c in range(512, 992))
        assert out[991, 991] == img[767, 511]

    def test_rejects_smaller_target(self):
        with pytest.raises(TargetSmallerThanSource):
            pad_edge_replicate(np.zeros((10, 10), dtype=np.uint8), 5, 20)


# --- rotate_expand -----------------------------------------------------------

class TestRotateExpand:
    def test_zero_degrees_identity(self):
        rng = np.random.default_rng(1)
        img = rng.integers(0, 256, size=(30, 40), dtype=np.uint8)
        out, t = rotate_expand(img, 0.0)
        assert np.array_equal(out, img)
        assert np.allclose(t.matrix, AffineTransform.identity().matrix)

    def test_right_angle_canvas(self):
        img = np.zeros((200, 100), dtype=np.uint8)  # w=100, h=200
        out, _ = rotate_expand(img, 90.0)
        assert out.shape == (100, 200)

    @pytest.mark.parametrize("degrees", [30.0, 45.0, 90.0, 137.0])
    @pytest.mark.parametrize("shape", [(80, 120), (100, 100), (37, 211)])
    def test_corners_map_inside_canvas(self, degrees, shape):
        img = np.zeros(shape, dtype=np.uint8)
        out, t = rotate_expand(img, degrees)
        h, w = shape
        corners = np.array([[-0.5, -0.5], [w - 0.5, -0.5], [w - 0.5, h - 0.5], [-0.5, h - 0.5]])
        mapped = t.apply(corners)
        oh, ow = out.shape
        assert (mapped[:, 0] >= -0.5 - 1e-6).all() and (mapped[:, 0] <= ow - 0.5 + 1e-6).all()
        assert (mapped[:, 1] >= -0.5 - 1e-6).all() and (mapped[:, 1] <= oh - 0.5 + 1e-6).all()
        # expected canvas size from the rotated-rectangle bbox
        rad = math.radians(degrees)
        exp_w = math.ceil(w * abs(math.cos(rad)) + h * abs(math.sin(rad)) - 1e-9)
        exp_h = math.ceil(w * abs(math.sin(rad)) + h * abs(math.cos(rad)) - 1e-9)
        assert (ow, oh) == (exp_w, exp_h)

    @pytest.mark.parametrize("degrees", [0.0, 30.0, 45.0, 90.0, 137.0])
    def test_transform_round_trip(self, degrees):
        img = np.zeros((64, 48), dtype=np.uint8)
        _, t = rotate_expand(img, degrees)
        rng = np.random.default_rng(5)
        pts = rng.uniform(0, 48, size=(100, 2))
        back = t.invert().apply(t.apply(pts))
        assert np.abs(back - pts).max() < 0.5


# --- mask_iou ----------------------------------------------------------------

class TestMaskIou:
    def test_identical(self):
        m = np.zeros((4, 4), dtype=bool)
        m[1:3, 1:3] = True
        assert mask_iou(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4), dtype=bool)
        b = np.zeros((4, 4), dtype=bool)
        a[0, 0] = True
        b[3, 3] = True
        assert mask_iou(a, b) == 0.0

    def test_shifted_blocks(self):
        a = np.zeros((4, 4), dtype=bool)
        b = np.zeros((4, 4), dtype=bool)
        a[0:2, 0:2] = True
        b[1:3, 0:2] = True  # shifted one row down
        assert mask_iou(a, b) == pytest.approx(1 / 3)

    def test_both_empty_is_zero(self):
        assert mask_iou(np.zeros((3, 3), dtype=bool), np.zeros((3, 3), dtype=bool)) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            mask_iou(np.zeros((3, 3), dtype=bool), np.zeros((4, 3), dtype=bool))

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.random((8, 8)) < 0.5
        b = rng.random((8, 8)) < 0.5
        assert mask_iou(a, b) == mask_iou(b, a)


# --- boundary trace / rasterize ----------------------------------------------

class TestBoundaryPolygon:
    def test_square_round_trips_exactly(self):
        mask = np.zeros((6, 6), dtype=bool)
        mask[1:3, 2:4] = True
        poly = trace_boundary(mask)
        back = rasterize_polygon(poly, 6, 6)
        assert np.array_equal(back, mask)

    def test_adjacent_squares_union(self):
        mask = np.zeros((6, 8), dtype=bool)
        mask[1:3, 1:3] = True
        mask[1:3, 3:5] = True  # union is a 2x4 block of 8 pixels
        poly = trace_boundary(mask)
        back = rasterize_polygon(poly, 8, 6)
        assert np.array_equal(back, mask)
        assert back.sum() == 8

    def test_largest_region_kept(self):
        mask = np.zeros((10, 10), dtype=bool)
        mask[0:5, 0:5] = True
        mask[8, 8] = True
        poly = trace_boundary(mask)
        back = rasterize_polygon(poly, 10, 10)
        assert back[0:5, 0:5].all()
        assert not back[8, 8]

    @pytest.mark.parametrize("seed", range(6))
    def test_blob_round_trip_within_one_pixel(self, seed):
        # random elongated blob: thick line plus noise dilation
        import cv2
        rng = np.random.default_rng(seed)
        img = np.zeros((60, 60), dtype=np.uint8)
        p0 = rng.integers(5, 25, size=2)
        p1 = rng.integers(35, 55, size=2)
        cv2.line(img, tuple(p0), tuple(p1), 1, thickness=rng.integers(3, 9))
        mask = img.astype(bool)
        poly = trace_boundary(mask)
        back = rasterize_polygon(poly, 60, 60)
        # symmetric difference stays on the boundary: every mismatch touches
        # the other set within one pixel (Hausdorff <= 1)
        diff = back ^ mask
        if diff.any():
            from scipy import ndimage
            grown_mask = ndimage.binary_dilation(mask, np.ones((3, 3)))
            grown_back = ndimage.binary_dilation(back, np.ones((3, 3)))
            assert (back[diff] <= grown_mask[diff]).all()
            assert (mask[diff] <= grown_back[diff]).all()
        assert mask_iou(back, mask) > 0.85

    def test_single_pixel(self):
        mask = np.zeros((3, 3), dtype=bool)
        mask[1, 1] = True
        poly = trace_boundary(mask)
        assert poly.shape == (1, 2)
        back = rasterize_polygon(poly, 3, 3)
        assert np.array_equal(back, mask)


class TestRect:
    def test_expand_clamp(self):
        r = Rect(5, 5, 10, 10).expand(3)
        assert r == Rect(2, 2, 16, 16)
        assert Rect(0, 0, 4, 4).expand(2) == Rect(0, 0, 6, 6)
        assert Rect(2, 2, 16, 16).clamp(10, 12) == Rect(2, 2, 8, 10)

    def test_contains_union(self):
        a, b = Rect(0, 0, 4, 4), Rect(2, 2, 4, 4)
        assert a.union(b) == Rect(0, 0, 6, 6)
        assert a.union(b).contains(a) and a.union(b).contains(b)
        assert not a.contains(b)

    def test_invalid(self):
        with pytest.raises(ValueError):
            Rect(0, 0, 0, 5)
        with pytest.raises(ValueError):
            Rect(-1, 0, 5, 5)
