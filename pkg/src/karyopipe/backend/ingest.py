"""Image ingest: decoding, grayscale normalization, clinical filename parsing,
and leakage-free patient-level dataset splitting."""

from __future__ import annotations

import io
import random
import re
import time
import uuid

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import CorruptImage, MissingPatientId, UnsupportedFormat
from ..storage import ImageRecord, Store

__all__ = ["parse_clinical_filename", "decode_image", "ingest", "split_dataset_by_patient"]

_SUPPORTED_FORMATS = {"TIFF", "PNG", "BMP"}

# {patient_id}_{year}_{image_no}_{cultivation}_{type}.{tif|tiff|png|bmp}
# patient_id / cultivation / type are opaque tokens without underscores;
# year is four digits; image_no is an integer.
_FILENAME_RE = re.compile(
    r"^(?P<patient_id>[^_]+)_(?P<year>\d{4})_(?P<image_no>\d+)"
    r"_(?P<cultivation>[^_]+)_(?P<type>[^_.]+)\.(?:tif|tiff|png|bmp)$",
    re.IGNORECASE,
)


def parse_clinical_filename(filename: str) -> dict | None:
    """Parsed clinical fields, or None when the name does not match the grammar."""
    m = _FILENAME_RE.match(filename)
    if m is None:
        return None
    return {
        "patient_id": m.group("patient_id"),
        "year": int(m.group("year")),
        "image_no": int(m.group("image_no")),
        "cultivation": m.group("cultivation"),
        "type": m.group("type"),
    }


def decode_image(data: bytes) -> np.ndarray:
    """Decode TIFF/PNG/BMP bytes to an 8-bit grayscale raster (luminance)."""
    try:
        img = Image.open(io.BytesIO(data))
        fmt = img.format
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"not a decodable image: {exc}") from exc
    if fmt not in _SUPPORTED_FORMATS:
        raise UnsupportedFormat(f"format {fmt} not supported (TIFF, PNG, BMP only)")
    try:
        gray = img.convert("L")
        arr = np.asarray(gray, dtype=np.uint8)
    except Exception as exc:  # noqa: BLE001 - decoder-level corruption
        raise CorruptImage(f"image failed to decode: {exc}") from exc
    if arr.ndim != 2 or arr.size == 0:
        raise CorruptImage("decoded image is empty")
    return arr.copy()


def ingest(store: Store, data: bytes, filename: str, tenant_id: str) -> ImageRecord:
    """Decode, normalize, parse the filename when possible, and persist."""
    pixels = decode_image(data)
    fields = parse_clinical_filename(filename) or {}
    record = ImageRecord(
        image_id=uuid.uuid4().hex,
        tenant_id=tenant_id,
        filename=filename,
        width=pixels.shape[1],
        height=pixels.shape[0],
        patient_id=fields.get("patient_id"),
        year=fields.get("year"),
        image_no=fields.get("image_no"),
        cultivation=fields.get("cultivation"),
        culture_type=fields.get("type"),
        ingested_at=time.time(),
    )
    store.put_image(record, pixels)
    return record


def split_dataset_by_patient(records: list[ImageRecord],
                             ratios: tuple[float, float, float],
                             seed: int) -> dict[str, list[ImageRecord]]:
    """Partition records into train/val/test with no patient in two splits.

    The partition is over patient ids (seeded shuffle, ratio cut); every
    record of a patient follows its patient.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    missing = [r.image_id for r in records if not r.patient_id]
    if missing:
        raise MissingPatientId(f"records without patient_id: {missing}")
    patients = sorted({r.patient_id for r in records})
    rng = random.Random(seed)
    rng.shuffle(patients)
    n = len(patients)
    cut1 = round(n * ratios[0])
    cut2 = round(n * (ratios[0] + ratios[1]))
    assignment: dict[str, str] = {}
    for i, patient in enumerate(patients):
        split = "train" if i < cut1 else ("val" if i < cut2 else "test")
        assignment[patient] = split
    out: dict[str, list[ImageRecord]] = {"train": [], "val": [], "test": []}
    for record in records:
        out[assignment[record.patient_id]].append(record)
    return out
