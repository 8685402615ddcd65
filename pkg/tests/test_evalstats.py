"""Statistics tests: exact Fisher arithmetic against independent oracles."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from karyopipe.cascade import Detection
from karyopipe.errors import AllZeroMargins, DimensionMismatch
from karyopipe.evalstats import (
    AccuracyCounts,
    MatchOutcome,
    SpreadEval,
    accuracy_counts,
    angle_difference_mod180,
    build_report,
    fisher_exact_2x2,
    match_instances,
    pct,
    render_report_text,
)
from karyopipe.imaging import Rect


def fisher_brute_force(a, b, c, d):
    """Independent oracle: enumerate all tables with the observed margins and
    sum exact factorial-formula probabilities of those no more likely than the
    observed table (same 1e-12 relative inclusion tolerance)."""
    r1, r2, m1, m2 = a + b, c + d, a + c, b + d
    n = r1 + r2
    f = math.factorial

    def prob(x):
        # P(table) = r1! r2! m1! m2! / (n! x! (r1-x)! (m1-x)! (r2-m1+x)!)
        return Fraction(f(r1) * f(r2) * f(m1) * f(m2),
                        f(n) * f(x) * f(r1 - x) * f(m1 - x) * f(r2 - m1 + x))

    tables = [x for x in range(0, min(r1, m1) + 1) if r2 - m1 + x >= 0]
    observed = prob(a)
    cutoff = observed * Fraction(10 ** 12 + 1, 10 ** 12)
    return float(sum(p for x in tables if (p := prob(x)) <= cutoff))


def det(x0, y0, w, h):
    return Detection(mask=np.ones((h, w), dtype=bool), bbox=Rect(x0, y0, w, h), score=1.0)


class TestFisherExact:
    def test_identical_rows_p_one(self):
        assert fisher_exact_2x2(5, 5, 5, 5) == 1.0

    def test_all_zero_margins(self):
        with pytest.raises(AllZeroMargins):
            fisher_exact_2x2(0, 0, 0, 0)

    def test_degenerate_single_margin(self):
        assert fisher_exact_2x2(10, 0, 10, 0) == 1.0
        assert fisher_exact_2x2(0, 10, 0, 10) == 1.0

    def test_published_pilot_tables(self):
        # per-class classification tables from the pilot comparison
        assert fisher_exact_2x2(17, 3, 10, 10) == pytest.approx(0.0407, abs=0.0005)
        assert fisher_exact_2x2(10, 10, 12, 8) == pytest.approx(0.7512, abs=0.005)
        assert fisher_exact_2x2(19, 1, 16, 4) == pytest.approx(0.3416, abs=0.005)
        assert fisher_exact_2x2(18, 2, 11, 9) == pytest.approx(0.0310, abs=0.0005)
        assert fisher_exact_2x2(12, 9, 18, 3) == pytest.approx(0.0855, abs=0.001)
        assert fisher_exact_2x2(19, 1, 4, 16) < 0.0001

    def test_row_and_column_swap_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a, b, c, d = (int(v) for v in rng.integers(0, 25, 4))
            if a + b + c + d == 0:
                continue
            p = fisher_exact_2x2(a, b, c, d)
            assert fisher_exact_2x2(c, d, a, b) == pytest.approx(p, rel=1e-12)
            assert fisher_exact_2x2(b, a, d, c) == pytest.approx(p, rel=1e-12)

    def test_against_brute_force_sample(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            a, b, c, d = (int(v) for v in rng.integers(0, 16, 4))
            if a + b + c + d == 0:
                continue
            assert fisher_exact_2x2(a, b, c, d) == pytest.approx(
                fisher_brute_force(a, b, c, d), abs=1e-9)

    def test_against_scipy_sample(self):
        from scipy import stats
        rng = np.random.default_rng(2)
        for _ in range(100):
            a, b, c, d = (int(v) for v in rng.integers(0, 30, 4))
            if (a + b) == 0 or (c + d) == 0:
                continue
            ours = fisher_exact_2x2(a, b, c, d)
            theirs = stats.fisher_exact([[a, b], [c, d]])[1]
            assert ours == pytest.approx(theirs, abs=1e-7)

    def test_rejects_negative_or_fractional(self):
        with pytest.raises(ValueError):
            fisher_exact_2x2(-1, 2, 3, 4)
        with pytest.raises(ValueError):
            fisher_exact_2x2(1.5, 2, 3, 4)

    def test_large_counts(self):
        # tables at the pilot-study scale stay exact, no overflow
        p = fisher_exact_2x2(454, 5, 186, 273)
        assert 0.0 < p < 1e-50


class TestMatchInstances:
    def test_identical_all_correct(self):
        gts = [det(0, 0, 10, 10), det(50, 0, 10, 10), det(0, 50, 10, 10)]
        outcomes = match_instances(list(gts), gts)
        assert all(o.kind == "correct" for o in outcomes)
        assert sorted(o.pred_index for o in outcomes) == [0, 1, 2]

    def test_union_prediction_merges_both(self):
        # brute-force pixel counting on a 20x20 grid
        gt_a = det(0, 0, 8, 8)
        gt_b = det(10, 0, 8, 8)
        union = np.zeros((20, 20), dtype=bool)
        union[0:8, 0:8] = True
        union[0:8, 10:18] = True
        pred = Detection.from_frame_mask(union, 1.0)
        outcomes = match_instances([pred], [gt_a, gt_b])
        assert [o.kind for o in outcomes] == ["merged", "merged"]
        assert all(o.pred_index == 0 for o in outcomes)

    def test_no_predictions_all_missed(self):
        outcomes = match_instances([], [det(0, 0, 5, 5), det(10, 10, 5, 5)])
        assert [o.kind for o in outcomes] == ["missed", "missed"]

    def test_low_iou_is_missed_not_correct(self):
        gt = det(0, 0, 10, 10)
        pred = det(8, 8, 10, 10)  # IoU = 4/196
        outcomes = match_instances([pred], [gt])
        assert outcomes[0].kind == "missed"

    def test_pred_used_once(self):
        # one pred matching two GTs well: greedy assigns the better one;
        # cross-coverage pushes both to merged instead when above threshold
        gt_a = det(0, 0, 10, 10)
        gt_b = det(0, 0, 10, 10)
        pred = det(0, 0, 10, 10)
        outcomes = match_instances([pred], [gt_a, gt_b])
        assert [o.kind for o in outcomes] == ["merged", "merged"]

    def test_outcome_count_equals_gt_count(self):
        rng = np.random.default_rng(3)
        preds = [det(int(rng.integers(0, 90)), int(rng.integers(0, 90)), 8, 8)
                 for _ in range(7)]
        gts = [det(int(rng.integers(0, 90)), int(rng.integers(0, 90)), 8, 8)
               for _ in range(11)]
        outcomes = match_instances(preds, gts)
        assert len(outcomes) == 11
        assert {o.gt_index for o in outcomes} == set(range(11))

    def test_canvas_mismatch(self):
        with pytest.raises(DimensionMismatch):
            match_instances([], [], pred_canvas=(100, 100), gt_canvas=(200, 200))


class TestAccuracyCounts:
    def _outcomes(self, kinds):
        return [MatchOutcome(gt_index=i, kind=k, pred_index=i if k == "correct" else None)
                for i, k in enumerate(kinds)]

    def test_all_exact(self):
        outcomes = self._outcomes(["correct"] * 4)
        counts = accuracy_counts(
            outcomes,
            pred_classes={i: "5" for i in range(4)}, gt_classes=["5"] * 4,
            pred_angles={i: 10.0 for i in range(4)}, gt_angles=[10.0] * 4)
        assert counts.classification_correct == 4
        assert counts.rotation_correct == 4
        assert counts.per_class["5"] == [4, 4]

    def test_one_flipped_label(self):
        outcomes = self._outcomes(["correct"] * 46)
        pred = {i: "1" for i in range(46)}
        pred[13] = "2"
        counts = accuracy_counts(outcomes, pred, ["1"] * 46,
                                 {i: 0.0 for i in range(46)}, [0.0] * 46)
        assert counts.classification_correct == 45

    def test_rotation_mod180_boundary(self):
        assert angle_difference_mod180(170.0, 5.0) == pytest.approx(15.0)
        outcomes = self._outcomes(["correct"])
        counts = accuracy_counts(outcomes, {0: "1"}, ["1"], {0: 170.0}, [5.0],
                                 rot_tol_deg=15.0)
        assert counts.rotation_correct == 1
        counts = accuracy_counts(outcomes, {0: "1"}, ["1"], {0: 170.0}, [5.0],
                                 rot_tol_deg=14.9)
        assert counts.rotation_correct == 0

    def test_unmatched_count_as_incorrect(self):
        outcomes = self._outcomes(["correct", "merged", "missed"])
        counts = accuracy_counts(outcomes, {0: "1"}, ["1", "1", "1"],
                                 {0: 0.0}, [0.0, 0.0, 0.0])
        assert counts.total == 3
        assert counts.classification_correct == 1
        assert counts.rotation_correct == 1
        assert counts.segmentation_merged == 1
        assert counts.segmentation_missed == 1


def spread_eval(name, correct, merged, missed, cls_correct, rot_correct,
                tags=None, per_class=None):
    counts = AccuracyCounts(
        total=correct + merged + missed,
        segmentation_correct=correct, segmentation_merged=merged,
        segmentation_missed=missed, classification_correct=cls_correct,
        rotation_correct=rot_correct, per_class=per_class or {})
    return SpreadEval(spread_id=name, counts=counts, tags=tags or {})


class TestBuildReport:
    def test_percentage_row(self):
        report = build_report({"sysA": [spread_eval("s", 454, 5, 0, 409, 412)]})
        seg = report["systems"]["sysA"]["segmentation"]
        assert seg["correct_pct"] == 98.91
        assert seg["merged_pct"] == 1.09
        assert seg["missed_pct"] == 0.0
        text = render_report_text(report)
        assert "454 (98.91 %)" in text
        assert "5 (1.09 %)" in text
        assert "0 (0.00 %)" in text

    def test_pairwise_fisher_not_significant(self):
        report = build_report({
            "sysA": [spread_eval("s", 459, 0, 0, 409, 412)],
            "sysB": [spread_eval("s", 459, 0, 0, 399, 430)],
        })
        p = report["pairwise"]["sysA|sysB"]["classification_p"]
        assert 0.25 <= p <= 0.45
        assert p > 0.05

    def test_single_system_no_pairwise(self):
        report = build_report({"only": [spread_eval("s", 10, 0, 0, 10, 10)]})
        assert report["pairwise"] == {}
        assert "Fisher" not in render_report_text(report)

    def test_facet_grouping(self):
        spreads = [
            spread_eval("s1", 40, 0, 0, 37, 40, tags={"cultivation": "BM"}),
            spread_eval("s2", 46, 0, 0, 43, 46, tags={"cultivation": "BM"}),
            spread_eval("s3", 40, 0, 0, 34, 40, tags={"cultivation": "PHA"}),
            spread_eval("s4", 52, 0, 0, 46, 52, tags={"cultivation": "PHA"}),
        ]
        report = build_report({"sys": spreads}, facet_keys=("cultivation",))
        facet = report["facets"]["cultivation"]["sys"]
        assert facet["BM"]["classification"]["correct"] == 80
        assert facet["BM"]["total"] == 86
        assert facet["PHA"]["classification"]["correct"] == 80
        assert facet["PHA"]["total"] == 92
        assert facet["BM"]["classification"]["correct_pct"] == pct(80, 86)

    def test_per_class_sums_to_overall(self):
        per_class = {"1": [2, 2], "2": [1, 2], "X": [2, 2]}
        report = build_report({"sys": [spread_eval("s", 6, 0, 0, 5, 6,
                                                   per_class=per_class)]})
        block = report["systems"]["sys"]
        assert sum(v["correct"] for v in block["per_class"].values()) == 5
        assert sum(v["total"] for v in block["per_class"].values()) == 6

    def test_percentages_recomputed_from_counts(self):
        report = build_report({"sys": [spread_eval("s", 91, 5, 4, 80, 85)]})
        block = report["systems"]["sys"]
        assert block["segmentation"]["correct_pct"] == pct(91, 100)
        assert block["classification"]["correct_pct"] == pct(80, 100)
        assert block["rotation"]["correct_pct"] == pct(85, 100)


@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20), st.integers(0, 20))
@settings(max_examples=60, deadline=None)
def test_fisher_matches_oracle_property(a, b, c, d):
    if a + b + c + d == 0:
        return
    assert fisher_exact_2x2(a, b, c, d) == pytest.approx(
        fisher_brute_force(a, b, c, d), abs=1e-9)
