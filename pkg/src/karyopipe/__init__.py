"""karyopipe: a cascaded ROI-narrowing karyotyping pipeline at desk scale.

The package takes a metaphase microscope image and produces per-chromosome
annotations (mask polygon, class, orientation) plus an ISCN-grouped karyogram,
driving four model-stage backends (semantic segmentation, two-angle instance
detection, duplicate resolution, classification) that exist as deterministic
classical stubs, a ground-truth oracle, or remote HTTP services behind one
wire contract. Around the pipeline: a lease-based job queue with degraded-mode
fallbacks, a multi-tenant review backend with an append-only audit trail, a
synthetic spread generator with exact ground truth, and an evaluation harness
with exact Fisher statistics.
"""

from .cascade import (
    Annotation,
    CascadeParams,
    CascadeResult,
    Detection,
    RoiChain,
    StageStatus,
    run_cascade,
)
from .chromosomes import CLASSES, KARYOGRAM_GROUPS, UNKNOWN, karyogram_group
from .evalstats import build_report, fisher_exact_2x2, match_instances
from .imaging import Rect
from .models import OracleBackends, OracleNoise, StubBackends
from .synthgen import SyntheticSpec, generate_spread

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "CascadeParams",
    "CascadeResult",
    "Detection",
    "RoiChain",
    "StageStatus",
    "run_cascade",
    "CLASSES",
    "KARYOGRAM_GROUPS",
    "UNKNOWN",
    "karyogram_group",
    "build_report",
    "fisher_exact_2x2",
    "match_instances",
    "Rect",
    "OracleBackends",
    "OracleNoise",
    "StubBackends",
    "SyntheticSpec",
    "generate_spread",
    "__version__",
]
