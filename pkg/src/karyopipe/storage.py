"""Embedded transactional store shared by the backend and the orchestrator.

A single sqlite database holds tenants, images, the job queue, job results,
versioned annotation-set snapshots, and the append-only audit log. Snapshots
are canonical JSON (sorted keys, no whitespace), so equal states are
byte-identical. The job queue implements lease-based at-least-once delivery:
claiming is a single atomic transaction that also recovers expired leases,
and result writes are idempotent upserts keyed by job id.
"""

from __future__ import annotations

import json
import sqlite3
import time
import uuid
import zlib
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

__all__ = ["Store", "Job", "ImageRecord", "AuditEventRecord", "canonical_json"]

_SCHEMA = """
CREATE TABLE IF NOT EXISTS tenants(
    tenant_id TEXT PRIMARY KEY,
    display_name TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS tokens(
    token TEXT PRIMARY KEY,
    tenant_id TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS images(
    image_id TEXT PRIMARY KEY,
    tenant_id TEXT NOT NULL,
    filename TEXT NOT NULL,
    width INTEGER NOT NULL,
    height INTEGER NOT NULL,
    pixels BLOB NOT NULL,
    patient_id TEXT,
    year INTEGER,
    image_no INTEGER,
    cultivation TEXT,
    culture_type TEXT,
    ingested_at REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS jobs(
    job_id TEXT PRIMARY KEY,
    tenant_id TEXT NOT NULL,
    image_id TEXT NOT NULL,
    state TEXT NOT NULL,
    created_at REAL NOT NULL,
    lease_expiry REAL,
    attempts INTEGER NOT NULL DEFAULT 0,
    error TEXT
);
CREATE INDEX IF NOT EXISTS jobs_claim ON jobs(state, created_at);
CREATE TABLE IF NOT EXISTS job_results(
    job_id TEXT PRIMARY KEY,
    payload TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS annotation_sets(
    image_id TEXT NOT NULL,
    version INTEGER NOT NULL,
    payload TEXT NOT NULL,
    signed_off INTEGER NOT NULL DEFAULT 0,
    signoff_user TEXT,
    PRIMARY KEY(image_id, version)
);
CREATE TABLE IF NOT EXISTS audit_events(
    event_id INTEGER PRIMARY KEY AUTOINCREMENT,
    image_id TEXT NOT NULL,
    tenant_id TEXT NOT NULL,
    actor TEXT NOT NULL,
    at REAL NOT NULL,
    edit TEXT NOT NULL,
    resulting_version INTEGER NOT NULL,
    UNIQUE(image_id, resulting_version)
);
"""


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class Job:
    job_id: str
    tenant_id: str
    image_id: str
    state: str            # Queued | Running | Done | Partial | Failed
    created_at: float
    lease_expiry: float | None
    attempts: int
    error: str | None


@dataclass
class ImageRecord:
    image_id: str
    tenant_id: str
    filename: str
    width: int
    height: int
    patient_id: str | None = None
    year: int | None = None
    image_no: int | None = None
    cultivation: str | None = None
    culture_type: str | None = None
    ingested_at: float = 0.0


@dataclass
class AuditEventRecord:
    event_id: int
    image_id: str
    tenant_id: str
    actor: str
    at: float
    edit: dict
    resulting_version: int


def _job_from_row(row) -> Job:
    return Job(job_id=row[0], tenant_id=row[1], image_id=row[2], state=row[3],
               created_at=row[4], lease_expiry=row[5], attempts=row[6], error=row[7])


_JOB_COLS = "job_id, tenant_id, image_id, state, created_at, lease_expiry, attempts, error"


class Store:
    """One sqlite file; every method opens a short-lived connection, so a
    Store instance may be shared freely across threads and processes."""

    def __init__(self, path: str):
        self.path = str(path)
        con = self._connect()
        try:
            con.executescript(_SCHEMA)
            con.commit()
        finally:
            con.close()

    def _connect(self) -> sqlite3.Connection:
        con = sqlite3.connect(self.path, timeout=30.0)
        con.execute("PRAGMA journal_mode=WAL")
        con.execute("PRAGMA busy_timeout=30000")
        return con

    @contextmanager
    def _read(self):
        con = self._connect()
        try:
            yield con
        finally:
            con.close()

    @contextmanager
    def _txn(self):
        con = self._connect()
        try:
            con.execute("BEGIN IMMEDIATE")
            yield con
            con.commit()
        except BaseException:
            con.rollback()
            raise
        finally:
            con.close()

    # --- tenants and tokens ---------------------------------------------------

    def add_tenant(self, tenant_id: str, display_name: str, token: str | None = None) -> None:
        with self._txn() as con:
            con.execute("INSERT OR REPLACE INTO tenants VALUES (?, ?)",
                        (tenant_id, display_name))
            if token is not None:
                con.execute("INSERT OR REPLACE INTO tokens VALUES (?, ?)",
                            (token, tenant_id))

    def tenant_for_token(self, token: str) -> str | None:
        with self._read() as con:
            row = con.execute("SELECT tenant_id FROM tokens WHERE token = ?",
                              (token,)).fetchone()
        return row[0] if row else None

    # --- images -----------------------------------------------------------------

    def put_image(self, record: ImageRecord, pixels: np.ndarray) -> None:
        blob = zlib.compress(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())
        with self._txn() as con:
            con.execute(
                "INSERT INTO images VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (record.image_id, record.tenant_id, record.filename,
                 record.width, record.height, blob,
                 record.patient_id, record.year, record.image_no,
                 record.cultivation, record.culture_type, record.ingested_at))

    def get_image(self, image_id: str, tenant_id: str | None = None) -> ImageRecord | None:
        query = ("SELECT image_id, tenant_id, filename, width, height, patient_id, "
                 "year, image_no, cultivation, culture_type, ingested_at "
                 "FROM images WHERE image_id = ?")
        args = [image_id]
        if tenant_id is not None:
            query += " AND tenant_id = ?"
            args.append(tenant_id)
        with self._read() as con:
            row = con.execute(query, args).fetchone()
        if row is None:
            return None
        return ImageRecord(image_id=row[0], tenant_id=row[1], filename=row[2],
                           width=row[3], height=row[4], patient_id=row[5],
                           year=row[6], image_no=row[7], cultivation=row[8],
                           culture_type=row[9], ingested_at=row[10])

    def get_image_pixels(self, image_id: str) -> np.ndarray | None:
        with self._read() as con:
            row = con.execute(
                "SELECT width, height, pixels FROM images WHERE image_id = ?",
                (image_id,)).fetchone()
        if row is None:
            return None
        w, h, blob = row
        return np.frombuffer(zlib.decompress(blob), dtype=np.uint8).reshape(h, w).copy()

    def list_images(self, tenant_id: str) -> list[ImageRecord]:
        with self._read() as con:
            rows = con.execute(
                "SELECT image_id FROM images WHERE tenant_id = ? ORDER BY ingested_at",
                (tenant_id,)).fetchall()
        return [self.get_image(r[0]) for r in rows]

    # --- job queue -----------------------------------------------------------------

    def submit_job(self, tenant_id: str, image_id: str,
                   job_id: str | None = None) -> Job:
        job = Job(job_id=job_id or uuid.uuid4().hex, tenant_id=tenant_id,
                  image_id=image_id, state="Queued", created_at=time.time(),
                  lease_expiry=None, attempts=0, error=None)
        with self._txn() as con:
            con.execute(
                "INSERT INTO jobs VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                (job.job_id, job.tenant_id, job.image_id, job.state,
                 job.created_at, None, 0, None))
        return job

    def claim_job(self, lease_seconds: float, now: float | None = None) -> Job | None:
        """Atomically claim the oldest runnable job (new or expired lease)."""
        now = time.time() if now is None else now
        with self._txn() as con:
            row = con.execute(
                f"SELECT {_JOB_COLS} FROM jobs WHERE state = 'Queued' "
                "OR (state = 'Running' AND lease_expiry < ?) "
                "ORDER BY created_at, job_id LIMIT 1", (now,)).fetchone()
            if row is None:
                return None
            con.execute(
                "UPDATE jobs SET state = 'Running', lease_expiry = ?, "
                "attempts = attempts + 1 WHERE job_id = ?",
                (now + lease_seconds, row[0]))
        job = _job_from_row(row)
        job.state = "Running"
        job.lease_expiry = now + lease_seconds
        job.attempts += 1
        return job

    def complete_job(self, job_id: str, state: str, payload: dict,
                     error: str | None = None) -> None:
        """Idempotent terminal write: reprocessing produces the same row."""
        if state not in ("Done", "Partial", "Failed"):
            raise ValueError(f"not a terminal state: {state}")
        text = canonical_json(payload)
        with self._txn() as con:
            con.execute(
                "INSERT INTO job_results(job_id, payload) VALUES (?, ?) "
                "ON CONFLICT(job_id) DO UPDATE SET payload = excluded.payload",
                (job_id, text))
            con.execute(
                "UPDATE jobs SET state = ?, lease_expiry = NULL, error = ? "
                "WHERE job_id = ?", (state, error, job_id))

    def get_job(self, job_id: str, tenant_id: str | None = None) -> Job | None:
        query = f"SELECT {_JOB_COLS} FROM jobs WHERE job_id = ?"
        args = [job_id]
        if tenant_id is not None:
            query += " AND tenant_id = ?"
            args.append(tenant_id)
        with self._read() as con:
            row = con.execute(query, args).fetchone()
        return None if row is None else _job_from_row(row)

    def get_job_result(self, job_id: str) -> dict | None:
        with self._read() as con:
            row = con.execute("SELECT payload FROM job_results WHERE job_id = ?",
                              (job_id,)).fetchone()
        return None if row is None else json.loads(row[0])

    def job_states(self) -> dict[str, int]:
        with self._read() as con:
            rows = con.execute(
                "SELECT state, COUNT(*) FROM jobs GROUP BY state").fetchall()
        return dict(rows)

    # --- annotation sets and audit ---------------------------------------------------

    def ensure_base_annotation_set(self, image_id: str, payload: dict) -> bool:
        """Create version 0 unless any version already exists. Returns creation."""
        with self._txn() as con:
            row = con.execute(
                "SELECT COUNT(*) FROM annotation_sets WHERE image_id = ?",
                (image_id,)).fetchone()
            if row[0]:
                return False
            con.execute(
                "INSERT INTO annotation_sets(image_id, version, payload) VALUES (?, 0, ?)",
                (image_id, canonical_json(payload)))
            return True

    def latest_annotation_version(self, image_id: str) -> tuple[int, bool] | None:
        """(version, signed_off) of the newest snapshot, or None."""
        with self._read() as con:
            row = con.execute(
                "SELECT version, signed_off FROM annotation_sets "
                "WHERE image_id = ? ORDER BY version DESC LIMIT 1",
                (image_id,)).fetchone()
        return None if row is None else (row[0], bool(row[1]))

    def get_annotation_set(self, image_id: str, version: int) -> dict | None:
        with self._read() as con:
            row = con.execute(
                "SELECT payload FROM annotation_sets WHERE image_id = ? AND version = ?",
                (image_id, version)).fetchone()
        return None if row is None else json.loads(row[0])

    def get_annotation_set_raw(self, image_id: str, version: int) -> str | None:
        with self._read() as con:
            row = con.execute(
                "SELECT payload FROM annotation_sets WHERE image_id = ? AND version = ?",
                (image_id, version)).fetchone()
        return None if row is None else row[0]

    def append_edit(self, image_id: str, tenant_id: str, actor: str, edit: dict,
                    expected_version: int, new_payload: dict) -> AuditEventRecord:
        """Insert snapshot version expected_version + 1 plus its audit event.

        The optimistic-concurrency and sign-off checks run inside the same
        transaction; callers must have validated the edit semantics already.
        """
        from .errors import SignedOffImmutable, VersionConflict
        now = time.time()
        with self._txn() as con:
            row = con.execute(
                "SELECT version, signed_off FROM annotation_sets "
                "WHERE image_id = ? ORDER BY version DESC LIMIT 1",
                (image_id,)).fetchone()
            if row is None or row[0] != expected_version:
                current = None if row is None else row[0]
                raise VersionConflict(
                    f"expected version {expected_version}, current is {current}")
            if row[1]:
                raise SignedOffImmutable("annotation set is signed off")
            version = expected_version + 1
            con.execute(
                "INSERT INTO annotation_sets(image_id, version, payload) VALUES (?, ?, ?)",
                (image_id, version, canonical_json(new_payload)))
            cur = con.execute(
                "INSERT INTO audit_events(image_id, tenant_id, actor, at, edit, "
                "resulting_version) VALUES (?, ?, ?, ?, ?, ?)",
                (image_id, tenant_id, actor, now, canonical_json(edit), version))
            event_id = cur.lastrowid
        return AuditEventRecord(event_id=event_id, image_id=image_id,
                                tenant_id=tenant_id, actor=actor, at=now,
                                edit=edit, resulting_version=version)

    def audit_events(self, image_id: str, up_to_version: int | None = None
                     ) -> list[AuditEventRecord]:
        query = ("SELECT event_id, image_id, tenant_id, actor, at, edit, "
                 "resulting_version FROM audit_events WHERE image_id = ?")
        args: list = [image_id]
        if up_to_version is not None:
            query += " AND resulting_version <= ?"
            args.append(up_to_version)
        query += " ORDER BY resulting_version"
        with self._read() as con:
            rows = con.execute(query, args).fetchall()
        return [AuditEventRecord(event_id=r[0], image_id=r[1], tenant_id=r[2],
                                 actor=r[3], at=r[4], edit=json.loads(r[5]),
                                 resulting_version=r[6]) for r in rows]

    def sign_off(self, image_id: str, user: str) -> int:
        """Mark the latest snapshot signed off; returns its version."""
        with self._txn() as con:
            row = con.execute(
                "SELECT version FROM annotation_sets WHERE image_id = ? "
                "ORDER BY version DESC LIMIT 1", (image_id,)).fetchone()
            if row is None:
                raise ValueError(f"no annotation sets for image {image_id}")
            con.execute(
                "UPDATE annotation_sets SET signed_off = 1, signoff_user = ? "
                "WHERE image_id = ? AND version = ?", (user, image_id, row[0]))
            return row[0]
