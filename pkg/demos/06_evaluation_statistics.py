"""Evaluation harness: matching taxonomy and exact statistics
==============================================================

Each ground-truth instance gets exactly one outcome (correct / merged with
another object / missed); accuracy uses all instances as the denominator.
Fisher's exact test runs on exact integer arithmetic — the published pilot
tables reproduce from their raw counts.
"""

import numpy as np

from karyopipe.cascade import Detection
from karyopipe.evalstats import (
    AccuracyCounts,
    SpreadEval,
    build_report,
    fisher_exact_2x2,
    match_instances,
    render_report_text,
)
from karyopipe.imaging import Rect

# --- the outcome taxonomy on a toy scene ---------------------------------------


def rect_det(x0, y0, w, h):
    return Detection(mask=np.ones((h, w), dtype=bool), bbox=Rect(x0, y0, w, h), score=1.0)


gts = [rect_det(10, 10, 8, 20), rect_det(30, 10, 8, 20), rect_det(60, 10, 8, 20)]
# one prediction matches gt0; one fused blob covers gt1 and gt2
fused = np.zeros((60, 90), dtype=bool)
fused[10:30, 30:38] = True
fused[10:30, 60:68] = True
preds = [rect_det(10, 10, 8, 20), Detection.from_frame_mask(fused, 0.9)]
for outcome in match_instances(preds, gts):
    print(f"gt {outcome.gt_index}: {outcome.kind}")

# --- published pilot tables, reproduced from raw counts ---------------------------

print("\nFisher's exact test (two-sided, sum-of-probabilities convention):")
tables = {
    "segmentation, pilot vs density reference": (454, 5, 186, 273),
    "classification, pilot vs AI reference": (409, 50, 399, 60),
    "per-class 13": (17, 3, 10, 10),
    "per-class 22": (10, 10, 12, 8),
}
for name, cells in tables.items():
    print(f"  {name}: p = {fisher_exact_2x2(*cells):.4g}")

# --- a report with facets ---------------------------------------------------------

spreads = [
    SpreadEval("s1", AccuracyCounts(total=46, segmentation_correct=46,
                                    classification_correct=43, rotation_correct=45),
               tags={"cultivation": "BM"}),
    SpreadEval("s2", AccuracyCounts(total=46, segmentation_correct=45,
                                    segmentation_merged=1,
                                    classification_correct=40, rotation_correct=44),
               tags={"cultivation": "PHA"}),
]
report = build_report({"pipeline": spreads}, facet_keys=("cultivation",))
print()
print(render_report_text(report))
