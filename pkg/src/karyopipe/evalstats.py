"""Evaluation harness: instance matching, accuracy counts, exact statistics.

The segmentation outcome taxonomy assigns every ground-truth instance exactly
one of three outcomes: correctly segmented, merged with another object, or
missed. Classification and rotation accuracy use all ground-truth instances
as the denominator, so unmatched instances count as failures. Fisher's exact
test runs on exact integer arithmetic with no normal approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .cascade import Detection, detection_iou
from .chromosomes import CLASSES
from .errors import AllZeroMargins, DimensionMismatch

__all__ = [
    "MatchOutcome",
    "SpreadEval",
    "match_instances",
    "accuracy_counts",
    "AccuracyCounts",
    "fisher_exact_2x2",
    "build_report",
    "render_report_text",
    "pct",
]

# Inclusion tolerance for the two-sided sum-of-small-probabilities rule:
# tables whose probability is at most (1 + 1e-12) times the observed table's
# probability contribute to the p-value.
_REL_TOL_NUM = 10 ** 12 + 1
_REL_TOL_DEN = 10 ** 12


def fisher_exact_2x2(a: int, b: int, c: int, d: int) -> float:
    """Two-sided Fisher's exact test p-value for [[a, b], [c, d]].

    Rows are systems, columns are correct/incorrect counts. Two-sided by the
    sum-of-probabilities convention: the p-value sums the hypergeometric
    probabilities of every table with the same margins whose probability does
    not exceed the observed table's (within relative tolerance 1e-12). All
    arithmetic is exact (integer binomials and rationals).

    Raises:
        AllZeroMargins: for the all-zero table.
    """
    cells = (a, b, c, d)
    if any(int(v) != v or v < 0 for v in cells):
        raise ValueError(f"cells must be nonnegative integers, got {cells}")
    a, b, c, d = (int(v) for v in cells)
    r1, r2 = a + b, c + d
    m1 = a + c
    n = r1 + r2
    if n == 0:
        raise AllZeroMargins("empty table")
    if r1 == 0 or r2 == 0 or m1 == 0 or m1 == n:
        return 1.0  # a degenerate margin admits a single table

    lo = max(0, m1 - r2)
    hi = min(r1, m1)
    numerators = [math.comb(r1, x) * math.comb(r2, m1 - x) for x in range(lo, hi + 1)]
    observed = numerators[a - lo]
    included = sum(num for num in numerators
                   if num * _REL_TOL_DEN <= observed * _REL_TOL_NUM)
    return float(Fraction(included, math.comb(n, m1)))


# --- instance matching -----------------------------------------------------------

@dataclass(frozen=True)
class MatchOutcome:
    """Outcome for one ground-truth instance."""

    gt_index: int
    kind: str                 # "correct" | "merged" | "missed"
    pred_index: int | None = None


def _coverage(pred: Detection, gt: Detection) -> float:
    """Fraction of the ground-truth mask covered by the prediction."""
    ix0 = max(pred.bbox.x0, gt.bbox.x0)
    iy0 = max(pred.bbox.y0, gt.bbox.y0)
    ix1 = min(pred.bbox.x1, gt.bbox.x1)
    iy1 = min(pred.bbox.y1, gt.bbox.y1)
    if ix1 <= ix0 or iy1 <= iy0:
        return 0.0
    wp = pred.mask[iy0 - pred.bbox.y0:iy1 - pred.bbox.y0,
                   ix0 - pred.bbox.x0:ix1 - pred.bbox.x0]
    wg = gt.mask[iy0 - gt.bbox.y0:iy1 - gt.bbox.y0,
                 ix0 - gt.bbox.x0:ix1 - gt.bbox.x0]
    return int(np.count_nonzero(wp & wg)) / gt.area


def match_instances(preds: list[Detection], gts: list[Detection],
                    iou_thresh: float = 0.5,
                    merged_coverage: float = 0.25,
                    pred_canvas: tuple[int, int] | None = None,
                    gt_canvas: tuple[int, int] | None = None) -> list[MatchOutcome]:
    """Assign each ground-truth instance one outcome.

    A ground truth is correct when its best prediction reaches `iou_thresh`
    IoU and that prediction does not also cover more than `merged_coverage`
    of any other ground truth; it is merged when some prediction covers at
    least `merged_coverage` of it and of another ground truth; otherwise it
    is missed. Each prediction justifies at most one correct outcome, awarded
    greedily by descending IoU. When both canvas sizes are supplied they must
    agree: instances from different canvases are not comparable.
    """
    if pred_canvas is not None and gt_canvas is not None and pred_canvas != gt_canvas:
        raise DimensionMismatch(
            f"prediction canvas {pred_canvas} differs from ground truth {gt_canvas}")
    n_pred, n_gt = len(preds), len(gts)
    iou = np.zeros((n_pred, n_gt))
    cov = np.zeros((n_pred, n_gt))
    for p, pred in enumerate(preds):
        for g, gt in enumerate(gts):
            iou[p, g] = detection_iou(pred, gt)
            cov[p, g] = _coverage(pred, gt)

    assigned: dict[int, int] = {}
    used_preds: set[int] = set()
    order = sorted(((p, g) for p in range(n_pred) for g in range(n_gt)),
                   key=lambda pg: -iou[pg])
    for p, g in order:
        if iou[p, g] < iou_thresh:
            break
        if p in used_preds or g in assigned:
            continue
        others = [g2 for g2 in range(n_gt) if g2 != g and cov[p, g2] > merged_coverage]
        if others:
            continue
        assigned[g] = p
        used_preds.add(p)

    outcomes: list[MatchOutcome] = []
    for g in range(n_gt):
        if g in assigned:
            outcomes.append(MatchOutcome(gt_index=g, kind="correct", pred_index=assigned[g]))
            continue
        merged_pred = None
        best_cov = 0.0
        for p in range(n_pred):
            if cov[p, g] >= merged_coverage and any(
                    cov[p, g2] >= merged_coverage for g2 in range(n_gt) if g2 != g):
                if cov[p, g] > best_cov:
                    merged_pred, best_cov = p, cov[p, g]
        if merged_pred is not None:
            outcomes.append(MatchOutcome(gt_index=g, kind="merged", pred_index=merged_pred))
        else:
            outcomes.append(MatchOutcome(gt_index=g, kind="missed"))
    return outcomes


# --- accuracy --------------------------------------------------------------------

def angle_difference_mod180(a: float, b: float) -> float:
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


@dataclass
class AccuracyCounts:
    total: int = 0
    segmentation_correct: int = 0
    segmentation_merged: int = 0
    segmentation_missed: int = 0
    classification_correct: int = 0
    rotation_correct: int = 0
    per_class: dict[str, list[int]] = field(default_factory=dict)  # label -> [correct, total]

    def add(self, other: "AccuracyCounts") -> None:
        self.total += other.total
        self.segmentation_correct += other.segmentation_correct
        self.segmentation_merged += other.segmentation_merged
        self.segmentation_missed += other.segmentation_missed
        self.classification_correct += other.classification_correct
        self.rotation_correct += other.rotation_correct
        for label, (correct, total) in other.per_class.items():
            slot = self.per_class.setdefault(label, [0, 0])
            slot[0] += correct
            slot[1] += total


def accuracy_counts(outcomes: list[MatchOutcome],
                    pred_classes: dict[int, str], gt_classes: list[str],
                    pred_angles: dict[int, float], gt_angles: list[float],
                    rot_tol_deg: float = 15.0) -> AccuracyCounts:
    """Count classification and rotation hits over all ground-truth instances.

    A hit needs a correct segmentation match; merged and missed instances
    count against both axes. Rotation compares modulo 180 degrees.
    """
    counts = AccuracyCounts(total=len(outcomes))
    for outcome in outcomes:
        g = outcome.gt_index
        label = gt_classes[g]
        slot = counts.per_class.setdefault(label, [0, 0])
        slot[1] += 1
        if outcome.kind == "correct":
            counts.segmentation_correct += 1
        elif outcome.kind == "merged":
            counts.segmentation_merged += 1
        else:
            counts.segmentation_missed += 1
        if outcome.kind != "correct":
            continue
        p = outcome.pred_index
        if pred_classes.get(p) == label:
            counts.classification_correct += 1
            slot[0] += 1
        if p in pred_angles and \
                angle_difference_mod180(pred_angles[p], gt_angles[g]) <= rot_tol_deg:
            counts.rotation_correct += 1
    return counts


@dataclass
class SpreadEval:
    """Per-spread evaluation record for one system."""

    spread_id: str
    counts: AccuracyCounts
    tags: dict[str, str] = field(default_factory=dict)


# --- report ----------------------------------------------------------------------

def pct(count: int, total: int, decimals: int = 2) -> float:
    if total == 0:
        return 0.0
    return round(100.0 * count / total, decimals)


def _aggregate(spreads: list[SpreadEval]) -> AccuracyCounts:
    agg = AccuracyCounts()
    for spread in spreads:
        agg.add(spread.counts)
    return agg


def _counts_block(counts: AccuracyCounts) -> dict:
    t = counts.total
    return {
        "total": t,
        "segmentation": {
            "correct": counts.segmentation_correct,
            "merged": counts.segmentation_merged,
            "missed": counts.segmentation_missed,
            "correct_pct": pct(counts.segmentation_correct, t),
            "merged_pct": pct(counts.segmentation_merged, t),
            "missed_pct": pct(counts.segmentation_missed, t),
        },
        "classification": {
            "correct": counts.classification_correct,
            "incorrect": t - counts.classification_correct,
            "correct_pct": pct(counts.classification_correct, t),
        },
        "rotation": {
            "correct": counts.rotation_correct,
            "incorrect": t - counts.rotation_correct,
            "correct_pct": pct(counts.rotation_correct, t),
        },
        "per_class": {
            label: {"correct": correct, "total": total,
                    "correct_pct": pct(correct, total, 1)}
            for label, (correct, total) in sorted(
                counts.per_class.items(),
                key=lambda kv: (CLASSES.index(kv[0]) if kv[0] in CLASSES else 99))
        },
    }


def build_report(systems: dict[str, list[SpreadEval]],
                 facet_keys: tuple[str, ...] = (),
                 iou_thresh: float = 0.5, rot_tol_deg: float = 15.0) -> dict:
    """Aggregate per-spread evaluations into the three accuracy tables.

    When at least two systems are present, pairwise Fisher p-values compare
    correct-vs-incorrect counts per table and per class. Facet keys group
    spreads by tag value (e.g. a cultivation tag) into sub-reports.
    """
    if not systems:
        raise ValueError("at least one system required")
    report: dict = {
        "config": {
            "iou_thresh": iou_thresh,
            "rot_tol_deg": rot_tol_deg,
            "fisher_convention": "two-sided, sum of probabilities <= observed "
                                 "(relative tolerance 1e-12)",
            "rotation_note": "rotation compared modulo 180 degrees",
        },
        "systems": {},
        "pairwise": {},
        "facets": {},
    }
    aggregates = {name: _aggregate(spreads) for name, spreads in systems.items()}
    for name, agg in aggregates.items():
        report["systems"][name] = _counts_block(agg)

    names = sorted(systems)
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            a, b = names[i], names[j]
            ca, cb = aggregates[a], aggregates[b]
            pair: dict = {
                "segmentation_p": fisher_exact_2x2(
                    ca.segmentation_correct, ca.total - ca.segmentation_correct,
                    cb.segmentation_correct, cb.total - cb.segmentation_correct),
                "classification_p": fisher_exact_2x2(
                    ca.classification_correct, ca.total - ca.classification_correct,
                    cb.classification_correct, cb.total - cb.classification_correct),
                "rotation_p": fisher_exact_2x2(
                    ca.rotation_correct, ca.total - ca.rotation_correct,
                    cb.rotation_correct, cb.total - cb.rotation_correct),
                "per_class_p": {},
            }
            for label in sorted(set(ca.per_class) & set(cb.per_class),
                                key=lambda l: CLASSES.index(l) if l in CLASSES else 99):
                xa, ta = ca.per_class[label]
                xb, tb = cb.per_class[label]
                if ta == 0 or tb == 0:
                    continue
                pair["per_class_p"][label] = fisher_exact_2x2(xa, ta - xa, xb, tb - xb)
            report["pairwise"][f"{a}|{b}"] = pair

    for key in facet_keys:
        facet: dict = {}
        for name, spreads in systems.items():
            groups: dict[str, list[SpreadEval]] = {}
            for spread in spreads:
                value = spread.tags.get(key)
                if value is not None:
                    groups.setdefault(value, []).append(spread)
            facet[name] = {value: _counts_block(_aggregate(members))
                           for value, members in sorted(groups.items())}
        report["facets"][key] = facet
    return report


def render_report_text(report: dict) -> str:
    """Aligned-column text rendering of the three accuracy tables."""
    lines: list[str] = []
    systems = report["systems"]
    pairwise = report.get("pairwise", {})

    def row(cells, widths):
        return "  ".join(str(c).ljust(w) for c, w in zip(cells, widths))

    name_w = max([len(n) for n in systems] + [6])

    lines.append("Segmentation outcomes")
    widths = (name_w, 18, 24, 16)
    lines.append(row(["System", "Correct", "Merged with other", "Missed"], widths))
    for name, block in systems.items():
        s = block["segmentation"]
        lines.append(row([
            name,
            f"{s['correct']} ({s['correct_pct']:.2f} %)",
            f"{s['merged']} ({s['merged_pct']:.2f} %)",
            f"{s['missed']} ({s['missed_pct']:.2f} %)"], widths))
    lines.append("")

    lines.append("Classification / rotation accuracy")
    widths = (name_w, 24, 24)
    lines.append(row(["System", "Classification", "Rotation (mod 180)"], widths))
    for name, block in systems.items():
        c, r = block["classification"], block["rotation"]
        lines.append(row([
            name,
            f"{c['correct']}/{block['total']} ({c['correct_pct']:.2f} %)",
            f"{r['correct']}/{block['total']} ({r['correct_pct']:.2f} %)"], widths))
    lines.append("")

    if pairwise:
        lines.append("Pairwise Fisher's exact tests (two-sided, "
                     "sum-of-probabilities convention)")
        for pair, stats in pairwise.items():
            marks = []
            for axis in ("segmentation_p", "classification_p", "rotation_p"):
                p = stats[axis]
                sig = " *" if p < 0.05 else ""
                marks.append(f"{axis.removesuffix('_p')} p={_fmt_p(p)}{sig}")
            lines.append(f"  {pair}: " + ", ".join(marks))
            if stats.get("per_class_p"):
                for label, p in stats["per_class_p"].items():
                    sig = " *" if p < 0.05 else ""
                    lines.append(f"    class {label}: p={_fmt_p(p)}{sig}")
        lines.append("")

    lines.append("Per-class classification")
    header = ["Class"] + list(systems.keys())
    widths = tuple([6] + [max(len(n), 18) for n in systems])
    lines.append(row(header, widths))
    labels: list[str] = []
    for block in systems.values():
        for label in block["per_class"]:
            if label not in labels:
                labels.append(label)
    labels.sort(key=lambda l: CLASSES.index(l) if l in CLASSES else 99)
    for label in labels:
        cells = [label]
        for block in systems.values():
            entry = block["per_class"].get(label)
            cells.append("-" if entry is None else
                         f"{entry['correct']}/{entry['total']} ({entry['correct_pct']:.1f} %)")
        lines.append(row(cells, widths))

    for key, facet in report.get("facets", {}).items():
        lines.append("")
        lines.append(f"Facet: {key}")
        for name, groups in facet.items():
            for value, block in groups.items():
                c = block["classification"]
                s = block["segmentation"]
                lines.append(
                    f"  {name} [{key}={value}]: segmentation "
                    f"{s['correct_pct']:.2f} %, classification "
                    f"{c['correct']}/{block['total']} ({c['correct_pct']:.2f} %)")
    return "\n".join(lines) + "\n"


def _fmt_p(p: float) -> str:
    if p < 0.0001:
        return "<0.0001"
    return f"{p:.4f}"
