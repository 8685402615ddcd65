"""Cascade geometry and stage-driver tests against synthetic ground truth."""

import numpy as np
import pytest

from karyopipe.cascade import (
    Annotation,
    CascadeParams,
    Detection,
    FallbackAction,
    DEGRADED_FALLBACKS,
    Outcome,
    RoiChain,
    Stage,
    back_transform,
    classify_label,
    detection_iou,
    mask_bbox_crop,
    prefilter_crop,
    prepare_semseg_input,
    resolve_duplicates,
    run_cascade,
    two_angle_merge,
)
from karyopipe.chromosomes import UNKNOWN
from karyopipe.errors import EmptySemanticMask, NoForeground
from karyopipe.imaging import AffineTransform, Rect, mask_iou, rasterize_polygon, rotate_expand
from karyopipe.models.oracle import OracleBackends
from karyopipe.models.stubs import StubBackends
from karyopipe.synthgen import SyntheticSpec, generate_spread

PARAMS = CascadeParams()


def rect_detection(x0, y0, w, h, score, frame_w=200, frame_h=200):
    mask = np.ones((h, w), dtype=bool)
    return Detection(mask=mask, bbox=Rect(x0, y0, w, h), score=score)


class TestPrefilterCrop:
    def test_blank_image_raises(self):
        with pytest.raises(NoForeground):
            prefilter_crop(np.full((512, 512), 240, dtype=np.uint8), PARAMS)

    def test_single_blob_contained_with_bounded_slack(self):
        img = np.full((1024, 1024), 250, dtype=np.uint8)
        img[462:562, 462:562] = 40
        crop1 = prefilter_crop(img, PARAMS)
        blob = Rect(462, 462, 100, 100)
        assert crop1.contains(blob)
        # slack: margin + thumbnail quantization and blur (scale 0.25 -> 4 px
        # per thumb pixel, allow three)
        slack = PARAMS.crop1_margin + 12
        assert crop1.x0 >= blob.x0 - slack and crop1.y0 >= blob.y0 - slack
        assert crop1.x1 <= blob.x1 + slack and crop1.y1 <= blob.y1 + slack

    def test_two_corner_blobs_union(self):
        img = np.full((800, 800), 250, dtype=np.uint8)
        img[40:120, 40:120] = 30
        img[680:760, 680:760] = 30
        crop1 = prefilter_crop(img, PARAMS)
        assert crop1.contains(Rect(40, 40, 80, 80))
        assert crop1.contains(Rect(680, 680, 80, 80))

    def test_debris_below_min_area_ignored(self):
        img = np.full((1024, 1024), 250, dtype=np.uint8)
        img[500:560, 500:560] = 40       # real object
        img[10, 10] = 0                  # one dark pixel: < 8 thumb px
        crop1 = prefilter_crop(img, PARAMS)
        assert crop1.x0 > 100 and crop1.y0 > 100


class TestPrepareSemsegInput:
    def test_large_square_no_visible_pad(self):
        img = np.random.default_rng(0).integers(0, 255, (1830, 1830)).astype(np.uint8)
        out, scale = prepare_semseg_input(img, Rect(0, 0, 1830, 1830), PARAMS)
        assert out.shape == (992, 992)
        assert scale == 992 / 1830

    def test_portrait_crop_pads_columns(self):
        img = np.random.default_rng(1).integers(0, 200, (1510, 1349)).astype(np.uint8)
        out, scale = prepare_semseg_input(img, Rect(0, 0, 1349, 1510), PARAMS)
        assert out.shape == (992, 992)
        assert scale == 992 / 1510
        resized_w = round(1349 * scale)  # ~886
        assert resized_w == 886
        for col in range(resized_w, 992):
            assert np.array_equal(out[:, col], out[:, resized_w - 1])

    def test_conforming_square_still_downsized(self):
        img = np.random.default_rng(2).integers(0, 200, (992, 992)).astype(np.uint8)
        out, scale = prepare_semseg_input(img, Rect(0, 0, 992, 992), PARAMS)
        assert out.shape == (992, 992)
        assert scale == 512 / 992
        # content occupies the top-left 512x512; the rest is replication
        assert np.array_equal(out[511, 512:], np.full(480, out[511, 511]))

    @pytest.mark.parametrize("shape", [(512, 512), (900, 600), (1830, 1830), (1536, 2048)])
    def test_canvas_always_exact(self, shape):
        img = np.zeros(shape, dtype=np.uint8)
        out, _ = prepare_semseg_input(img, Rect(0, 0, shape[1], shape[0]), PARAMS)
        assert out.shape == (992, 992)


class TestMaskBboxCrop:
    def test_empty_semantic_mask(self):
        sem = np.zeros((992, 992), dtype=np.uint8)
        with pytest.raises(EmptySemanticMask):
            mask_bbox_crop(sem, Rect(0, 0, 1830, 1830), 992 / 1830, PARAMS)

    def test_full_foreground_gives_crop1(self):
        crop1 = Rect(100, 50, 1400, 1600)
        scale = 992 / 1600
        sem = np.zeros((992, 992), dtype=np.uint8)
        rw, rh = round(1400 * scale), round(1600 * scale)
        sem[:rh, :rw] = 1
        crop2 = mask_bbox_crop(sem, crop1, scale, PARAMS)
        assert crop2 == crop1

    def test_block_arithmetic(self):
        # foreground block at canvas rect (100,100,200,300), scale 0.5,
        # crop1 origin (50,40), margin 12
        crop1 = Rect(50, 40, 1200, 1400)
        sem = np.zeros((992, 992), dtype=np.uint8)
        sem[100:400, 100:300] = 1
        crop2 = mask_bbox_crop(sem, crop1, 0.5, PARAMS)
        assert crop2 == Rect(50 + 200 - 12, 40 + 200 - 12, 400 + 24, 600 + 24)
        # forward-map crop2 back onto the canvas: it covers the block
        chain = RoiChain(crop1=crop1, semseg_scale=0.5, crop2=crop2)
        corners = chain.original_to_canvas([[crop2.x0, crop2.y0], [crop2.x1, crop2.y1]])
        assert corners[0][0] <= 100 and corners[0][1] <= 100
        assert corners[1][0] >= 300 and corners[1][1] >= 400

    def test_crop2_always_inside_crop1(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            cw, ch = int(rng.integers(600, 2000)), int(rng.integers(600, 2000))
            crop1 = Rect(int(rng.integers(0, 50)), int(rng.integers(0, 50)), cw, ch)
            scale = 992 / max(cw, ch)
            sem = np.zeros((992, 992), dtype=np.uint8)
            x = int(rng.integers(0, 900)); y = int(rng.integers(0, 900))
            sem[y:y + int(rng.integers(2, 90)), x:x + int(rng.integers(2, 90))] = 1
            try:
                crop2 = mask_bbox_crop(sem, crop1, scale, PARAMS)
            except EmptySemanticMask:
                continue
            assert crop1.contains(crop2)


class TestTwoAngleMerge:
    def test_identical_detection_kept_once(self):
        det = rect_detection(10, 10, 20, 30, 0.8)
        out = two_angle_merge([det], [det], AffineTransform.identity(), PARAMS, 200, 200)
        assert len(out) == 1

    def test_disjoint_detections_both_kept(self):
        a = rect_detection(0, 0, 10, 10, 0.9)
        b = rect_detection(50, 50, 10, 10, 0.7)
        out = two_angle_merge([a, b], [], AffineTransform.identity(), PARAMS, 200, 200)
        assert len(out) == 2

    def test_high_overlap_keeps_higher_score(self):
        # rects 18 long offset 2: IoU = 16/20 = 0.8 >= 0.7
        a = Detection(mask=np.ones((10, 18), dtype=bool), bbox=Rect(0, 0, 18, 10), score=0.9)
        b = Detection(mask=np.ones((10, 18), dtype=bool), bbox=Rect(2, 0, 18, 10), score=0.7)
        assert detection_iou(a, b) == pytest.approx(0.8)
        out = two_angle_merge([b], [a], AffineTransform.identity(), PARAMS, 200, 200)
        assert len(out) == 1
        assert out[0].score == 0.9

    def test_idempotent(self):
        rng = np.random.default_rng(9)
        dets = [rect_detection(int(rng.integers(0, 150)), int(rng.integers(0, 150)),
                               int(rng.integers(5, 30)), int(rng.integers(5, 30)),
                               float(rng.random())) for _ in range(12)]
        once = two_angle_merge(dets, [], AffineTransform.identity(), PARAMS, 200, 200)
        twice = two_angle_merge(once, [], AffineTransform.identity(), PARAMS, 200, 200)
        assert len(once) == len(twice)
        for x, y in zip(once, twice):
            assert x.bbox == y.bbox and x.score == y.score
            assert np.array_equal(x.mask, y.mask)

    def test_rotated_pass_mapped_back(self):
        # put a square on a frame, rotate the frame, detect in rotated coords
        frame = np.full((120, 160), 230, dtype=np.uint8)
        frame[40:70, 60:100] = 50
        rot_img, t = rotate_expand(frame, 45.0)
        rot_mask = rot_img <= 140
        from karyopipe.imaging import mask_bbox
        bb = mask_bbox(rot_mask)
        det45 = Detection(mask=bb.crop(rot_mask), bbox=bb, score=0.8)
        out = two_angle_merge([], [det45], t, PARAMS, 160, 120)
        assert len(out) == 1
        truth = np.zeros((120, 160), dtype=bool)
        truth[40:70, 60:100] = True
        assert mask_iou(out[0].frame_mask(160, 120), truth) > 0.85


class TestResolveDuplicates:
    def test_outside_semantic_mask_dropped(self):
        det = rect_detection(10, 10, 20, 20, 0.9)
        sem = np.zeros((200, 200), dtype=bool)
        sem[100:150, 100:150] = True
        assert resolve_duplicates([det], sem, PARAMS) == []

    def test_inside_semantic_mask_unchanged(self):
        det = rect_detection(110, 110, 20, 20, 0.9)
        sem = np.zeros((200, 200), dtype=bool)
        sem[100:150, 100:150] = True
        out = resolve_duplicates([det], sem, PARAMS)
        assert len(out) == 1
        assert out[0].bbox == det.bbox
        assert np.array_equal(out[0].mask, det.mask)

    def test_near_duplicates_merged_with_union_and_max_score(self):
        # two 40x70 rects offset 10 in x: IoU 60/80 = 0.75, centroids 10 apart
        a = Detection(mask=np.ones((40, 70), dtype=bool), bbox=Rect(0, 0, 70, 40), score=0.6)
        b = Detection(mask=np.ones((40, 70), dtype=bool), bbox=Rect(10, 0, 70, 40), score=0.85)
        assert detection_iou(a, b) == pytest.approx(0.75)
        out = resolve_duplicates([a, b], None, PARAMS)
        assert len(out) == 1
        merged = out[0]
        assert merged.score == 0.85
        # brute-force union on the frame
        union = a.frame_mask(200, 200) | b.frame_mask(200, 200)
        assert np.array_equal(merged.frame_mask(200, 200), union)

    def test_distant_high_iou_not_merged(self):
        # same IoU construction but centroids 30 apart (> 20)
        a = Detection(mask=np.ones((40, 210), dtype=bool), bbox=Rect(0, 0, 210, 40), score=0.6)
        b = Detection(mask=np.ones((40, 210), dtype=bool), bbox=Rect(30, 0, 210, 40), score=0.85)
        assert detection_iou(a, b) == pytest.approx(0.75)
        out = resolve_duplicates([a, b], None, PARAMS)
        assert len(out) == 2

    def test_partial_agreement_intersected(self):
        det = rect_detection(90, 100, 20, 20, 0.9)  # half in, half out
        sem = np.zeros((200, 200), dtype=bool)
        sem[0:200, 100:200] = True
        out = resolve_duplicates([det], sem, PARAMS)
        assert len(out) == 1  # agreement 0.5 >= 0.3
        assert out[0].bbox == Rect(100, 100, 10, 20)
        assert out[0].area == 200


class TestBackTransform:
    def test_pure_translation(self):
        mask = np.zeros((30, 30), dtype=bool)
        mask[5:15, 5:15] = True
        from karyopipe.imaging import mask_bbox
        bb = mask_bbox(mask)
        det = Detection(mask=bb.crop(mask), bbox=bb, score=1.0)
        chain = RoiChain(crop1=Rect(200, 300, 800, 800), semseg_scale=0.6,
                         crop2=Rect(300, 400, 600, 600))
        polys = back_transform([det], chain)
        assert len(polys) == 1
        assert polys[0][:, 0].min() == 305 and polys[0][:, 1].min() == 405
        assert polys[0][:, 0].max() == 314 and polys[0][:, 1].max() == 414

    def test_round_trip_identity(self):
        chain = RoiChain(crop1=Rect(10, 20, 500, 500), semseg_scale=0.9,
                         crop2=Rect(50, 60, 400, 400))
        pts = np.array([[0.0, 0.0], [100.0, 250.0]])
        back = chain.original_to_crop2(chain.crop2_to_original(pts))
        assert np.array_equal(back, pts)

    def test_random_chain_round_trips(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            w, h = int(rng.integers(500, 2500)), int(rng.integers(500, 2500))
            c1 = Rect(int(rng.integers(0, 40)), int(rng.integers(0, 40)),
                      int(rng.integers(300, w - 40)), int(rng.integers(300, h - 40)))
            inset_x = int(rng.integers(0, 100))
            inset_y = int(rng.integers(0, 100))
            c2 = Rect(c1.x0 + inset_x, c1.y0 + inset_y,
                      c1.w - inset_x - int(rng.integers(0, 50)),
                      c1.h - inset_y - int(rng.integers(0, 50)))
            chain = RoiChain(crop1=c1, semseg_scale=float(rng.uniform(0.2, 1.5)), crop2=c2)
            pts = rng.uniform(0, min(w, h), size=(1000, 2))
            back = chain.crop2_to_original(chain.original_to_crop2(pts))
            assert np.abs(back - pts).max() < 1.0
            back2 = chain.canvas_to_original(chain.original_to_canvas(pts))
            assert np.abs(back2 - pts).max() < 1.0


class TestClassifyLabel:
    def test_uniform_is_unknown(self):
        assert classify_label([1 / 24] * 24, 0.05) == UNKNOWN

    def test_confident_argmax(self):
        probs = [0.01] * 24
        probs[7] = 1 - 0.23
        assert classify_label(probs, 0.05) == "8"


class TestDegradedTable:
    def test_table_rows(self):
        assert DEGRADED_FALLBACKS[Stage.PREFILTER] is FallbackAction.FAIL_JOB
        assert DEGRADED_FALLBACKS[Stage.SEMSEG] is FallbackAction.USE_CROP1
        assert DEGRADED_FALLBACKS[Stage.INSTANCE_45] is FallbackAction.USE_OTHER_ANGLE
        assert DEGRADED_FALLBACKS[Stage.DEDUP] is FallbackAction.PASS_THROUGH
        assert DEGRADED_FALLBACKS[Stage.CLASSIFY] is FallbackAction.ALL_UNKNOWN


class _FaultInjector:
    """Wraps a backend, raising on the named stages."""

    def __init__(self, inner, dead):
        self.inner = inner
        self.dead = set(dead)

    def semseg(self, *a, **k):
        if "semseg" in self.dead:
            raise ConnectionError("semseg service unreachable")
        return self.inner.semseg(*a, **k)

    def instances(self, image, image_id, angle_tag, frame):
        if f"instances{angle_tag}" in self.dead or "instances" in self.dead:
            raise ConnectionError(f"instance service unreachable ({angle_tag})")
        return self.inner.instances(image, image_id, angle_tag, frame)

    def dedup(self, *a, **k):
        if "dedup" in self.dead:
            raise ConnectionError("dedup service unreachable")
        return self.inner.dedup(*a, **k)

    def classify(self, *a, **k):
        if "classify" in self.dead:
            raise ConnectionError("classify service unreachable")
        return self.inner.classify(*a, **k)


@pytest.fixture(scope="module")
def spread():
    return generate_spread(SyntheticSpec(seed=21))


class TestRunCascade:
    def test_oracle_matches_ground_truth(self, spread):
        img, gt = spread
        oracle = OracleBackends()
        oracle.register("img", gt)
        res = run_cascade(img, PARAMS, oracle, image_id="img")
        assert res.state == "Done"
        assert len(res.annotations) == len(gt.instances)
        h, w = img.shape
        for ann in res.annotations:
            mask = rasterize_polygon(ann.polygon, w, h)
            best = max(gt.instances, key=lambda i: mask_iou(mask, i.canvas_mask(w, h)))
            assert mask_iou(mask, best.canvas_mask(w, h)) > 0.95
            assert ann.class_label == best.class_label
            d = abs(ann.angle_degrees() - best.angle_degrees) % 180
            assert min(d, 180 - d) <= 1.0

    def test_crop_chain_invariants(self, spread):
        img, gt = spread
        res = run_cascade(img, PARAMS, StubBackends(), image_id="img")
        h, w = img.shape
        assert res.chain.crop1.contains(res.chain.crop2)
        assert Rect(0, 0, w, h).contains(res.chain.crop1)
        # every ground-truth pixel inside crop1
        sem = gt.semantic_classes() > 0
        ys, xs = np.nonzero(sem)
        c1 = res.chain.crop1
        assert xs.min() >= c1.x0 and xs.max() < c1.x1
        assert ys.min() >= c1.y0 and ys.max() < c1.y1

    def test_blank_image_fails_with_no_foreground(self):
        res = run_cascade(np.full((600, 600), 235, dtype=np.uint8), PARAMS, StubBackends())
        assert res.state == "Failed"
        assert "NoForeground" in res.error
        pre = res.statuses[0]
        assert pre.stage is Stage.PREFILTER and pre.outcome is Outcome.FAILED

    def test_classify_down_all_unknown(self, spread):
        img, _ = spread
        res = run_cascade(img, PARAMS, _FaultInjector(StubBackends(), ["classify"]))
        assert res.state == "Partial"
        assert res.annotations
        for ann in res.annotations:
            assert ann.class_label == UNKNOWN
            assert ann.class_probs == [1 / 24] * 24
            assert ann.rotation == (0.0, 1.0)
        by_stage = {s.stage: s for s in res.statuses}
        assert by_stage[Stage.CLASSIFY].outcome is Outcome.DEGRADED

    def test_semseg_down_crop2_equals_crop1(self, spread):
        img, _ = spread
        res = run_cascade(img, PARAMS, _FaultInjector(StubBackends(), ["semseg"]))
        assert res.state == "Partial"
        assert res.chain.crop2 == res.chain.crop1
        by_stage = {s.stage: s for s in res.statuses}
        assert by_stage[Stage.SEMSEG].outcome is Outcome.DEGRADED
        assert by_stage[Stage.MASK_CROP].outcome is Outcome.DEGRADED

    def test_one_instance_pass_down_still_completes(self, spread):
        img, gt = spread
        res = run_cascade(img, PARAMS, _FaultInjector(StubBackends(), ["instances45"]))
        assert res.state == "Partial"
        assert len(res.annotations) == len(gt.instances)

    def test_both_instance_passes_down_fails(self, spread):
        img, _ = spread
        res = run_cascade(img, PARAMS, _FaultInjector(StubBackends(), ["instances"]))
        assert res.state == "Failed"
        assert not res.annotations

    def test_every_stage_has_exactly_one_status(self, spread):
        img, _ = spread
        for dead in ([], ["semseg"], ["classify"], ["instances"]):
            res = run_cascade(img, PARAMS, _FaultInjector(StubBackends(), dead))
            stages = [s.stage for s in res.statuses]
            assert stages == list(Stage)

    def test_reproducible_output(self, spread):
        img, _ = spread
        a = run_cascade(img, PARAMS, StubBackends(seed=5))
        b = run_cascade(img, PARAMS, StubBackends(seed=5))
        assert len(a.annotations) == len(b.annotations)
        for x, y in zip(a.annotations, b.annotations):
            assert np.array_equal(x.polygon, y.polygon)
            assert x.class_label == y.class_label
            assert x.class_probs == y.class_probs
            assert x.rotation == y.rotation
            assert x.score == y.score

    def test_unknown_label_triggers_augmented_second_pass(self, spread):
        img, _ = spread

        class TwoPass:
            """Uniform (Unknown) on the plain pass, confident when augmented."""

            def __init__(self):
                self.inner = StubBackends()
                self.calls = []

            def semseg(self, *a, **k):
                return self.inner.semseg(*a, **k)

            def instances(self, *a, **k):
                return self.inner.instances(*a, **k)

            def dedup(self, *a, **k):
                return self.inner.dedup(*a, **k)

            def classify(self, patch, mask, augmented, image_id, origin):
                self.calls.append(augmented)
                from karyopipe.cascade import ClassifyResult
                if not augmented:
                    return ClassifyResult(class_probs=[1 / 24] * 24,
                                          rotation_sin=0.0, rotation_cos=1.0,
                                          model_version="two-pass")
                probs = [0.005] * 24
                probs[6] = 1 - 23 * 0.005
                return ClassifyResult(class_probs=probs, rotation_sin=0.0,
                                      rotation_cos=1.0, model_version="two-pass")

        backends = TwoPass()
        res = run_cascade(img, PARAMS, backends)
        assert res.state == "Done"
        # every detection needed both passes: plain then augmented
        n = len(res.annotations)
        assert backends.calls == [False, True] * n
        assert all(a.class_label == "7" for a in res.annotations)
