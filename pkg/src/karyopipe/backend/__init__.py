"""User-facing backend: ingest, editing with audit trail, karyogram synthesis."""

from .app import make_backend_app
from .editing import apply_edit, apply_edit_op, replay_audit
from .ingest import decode_image, ingest, parse_clinical_filename, split_dataset_by_patient
from .karyogram import KaryogramLayout, compose_karyogram, iscn_suggest, render_karyogram_png

__all__ = [
    "make_backend_app",
    "apply_edit",
    "apply_edit_op",
    "replay_audit",
    "decode_image",
    "ingest",
    "parse_clinical_filename",
    "split_dataset_by_patient",
    "KaryogramLayout",
    "compose_karyogram",
    "iscn_suggest",
    "render_karyogram_png",
]
