"""Pipeline workers: claim queued jobs, drive the cascade, write results.

Queue semantics are at-least-once with leases: a claim holds a job for a
bounded time; if the worker dies, the lease expires and the job returns to
the queue. Result writes are idempotent upserts keyed by job id, and the
whole pipeline is deterministic for a given image and seed, so reprocessing
produces byte-identical output.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from urllib.parse import urlparse

from .cascade import (
    DEGRADED_FALLBACKS,
    CascadeParams,
    CascadeResult,
    FallbackAction,
    Stage,
    StageBackends,
    run_cascade,
)
from .models.wire import annotation_to_json
from .storage import Job, Store

__all__ = [
    "PipelineConfig",
    "degraded_fallback",
    "process_job",
    "worker_loop",
    "result_payload",
]

_STAGE_KEYS = ("semseg", "instance", "dedup", "classify")


@dataclass
class PipelineConfig:
    """Worker-side configuration: service endpoints, timeouts, cascade knobs."""

    endpoints: dict[str, str] = field(default_factory=dict)
    timeout_ms: dict[str, int] = field(
        default_factory=lambda: {k: 30_000 for k in _STAGE_KEYS})
    retries: int = 1
    cascade: CascadeParams = field(default_factory=CascadeParams)
    lease_seconds: float = 60.0
    poll_interval: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        for key, value in self.timeout_ms.items():
            if value <= 0:
                raise ValueError(f"timeout for {key} must be > 0, got {value}")
        for key, url in self.endpoints.items():
            parsed = urlparse(url)
            if parsed.scheme not in ("http", "https") or not parsed.netloc:
                raise ValueError(f"endpoint {key} is not a valid URL: {url!r}")


def degraded_fallback(stage: Stage) -> FallbackAction:
    """The deterministic single-stage fallback table (total over stages)."""
    return DEGRADED_FALLBACKS[stage]


def result_payload(result: CascadeResult, job_latency_ms: float) -> dict:
    """Canonical job-result document written to the store."""
    return {
        "annotations": [annotation_to_json(a) for a in result.annotations],
        "roi_chain": None if result.chain is None else result.chain.to_dict(),
        "stage_statuses": [s.to_dict() for s in result.statuses],
        "state": result.state,
        "error": result.error,
        "job_latency_ms": job_latency_ms,
    }


def process_job(store: Store, job: Job, backends: StageBackends,
                config: PipelineConfig) -> str:
    """Run one claimed job to a terminal state; returns the state written."""
    image = store.get_image_pixels(job.image_id)
    if image is None:
        store.complete_job(job.job_id, "Failed", {"annotations": [], "state": "Failed"},
                           error=f"image {job.image_id} not found")
        return "Failed"
    started = time.perf_counter()
    result = run_cascade(image, config.cascade, backends,
                         image_id=job.image_id, retries=config.retries)
    latency_ms = (time.perf_counter() - started) * 1000.0
    payload = result_payload(result, latency_ms)
    state = result.state
    store.complete_job(job.job_id, state, payload, error=result.error)
    if state in ("Done", "Partial"):
        base = {
            "image_id": job.image_id,
            "version": 0,
            "canvas": {"width": image.shape[1], "height": image.shape[0]},
            "annotations": payload["annotations"],
            "next_annotation_id": len(payload["annotations"]),
        }
        store.ensure_base_annotation_set(job.image_id, base)
    return state


def worker_loop(store: Store, backends: StageBackends, config: PipelineConfig,
                stop_event: threading.Event | None = None,
                max_jobs: int | None = None, worker_id: str = "") -> int:
    """Claim-process loop; runs until stopped (or `max_jobs`, for tests).

    Returns the number of jobs brought to a terminal state. A worker killed
    mid-job leaves a leased Running row that later claims recover.
    """
    processed = 0
    while stop_event is None or not stop_event.is_set():
        if max_jobs is not None and processed >= max_jobs:
            break
        job = store.claim_job(config.lease_seconds)
        if job is None:
            if max_jobs is not None:
                break
            time.sleep(config.poll_interval)
            continue
        process_job(store, job, backends, config)
        processed += 1
    return processed
