"""HTTP service wrappers for the model-stage backends.

One app factory serves any StageBackends implementation (stubs or oracle)
behind the fixed wire contract. Role apps expose only their own endpoint plus
/healthz; the oracle app exposes all four.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..cascade import CascadeParams, StageBackends
from ..errors import EmptyMask, UnknownImageId
from ..storage import Store
from . import wire

__all__ = ["make_model_app", "make_orchestrator_status_app", "MODEL_ENDPOINTS"]

MODEL_ENDPOINTS = ("semseg", "instances", "dedup", "classify")


def make_model_app(backends: StageBackends, service_name: str,
                   model_version: str,
                   endpoints: tuple[str, ...] = MODEL_ENDPOINTS) -> FastAPI:
    app = FastAPI(title=f"model service: {service_name}")

    @app.get("/healthz")
    def healthz():
        return {"service": service_name, "model_version": model_version}

    def wrap(fn):
        try:
            return fn()
        except UnknownImageId as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except (EmptyMask, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    if "semseg" in endpoints:
        @app.post("/v1/semseg")
        def semseg(body: dict):
            image, image_id, frame = wire.semseg_request_from_json(body)
            result = wrap(lambda: backends.semseg(image, image_id, frame))
            return wire.semseg_response_to_json(result, image_id)

    if "instances" in endpoints:
        @app.post("/v1/instances")
        def instances(body: dict):
            image, image_id, angle, frame = wire.instances_request_from_json(body)
            result = wrap(lambda: backends.instances(image, image_id, angle, frame))
            return wire.instances_response_to_json(result.detections, image_id,
                                                   result.model_version)

    if "dedup" in endpoints:
        @app.post("/v1/dedup")
        def dedup(body: dict):
            dets, semantic, image_id, params_dict = wire.dedup_request_from_json(body)
            params = CascadeParams.from_dict(params_dict)
            out = wrap(lambda: backends.dedup(dets, semantic, image_id, params))
            return wire.dedup_response_to_json(out, image_id, model_version)

    if "classify" in endpoints:
        @app.post("/v1/classify")
        def classify(body: dict):
            patch, mask, augmented, image_id, origin = wire.classify_request_from_json(body)
            result = wrap(lambda: backends.classify(patch, mask, augmented,
                                                    image_id, origin))
            return wire.classify_response_to_json(result, image_id)

    return app


def make_orchestrator_status_app(store: Store) -> FastAPI:
    """Status surface for the worker role: health plus per-job stage view."""
    app = FastAPI(title="orchestrator")

    @app.get("/healthz")
    def healthz():
        return {"service": "orchestrator", "model_version": "orchestrator/1"}

    @app.get("/v1/jobs/{job_id}/status")
    def job_status(job_id: str):
        job = store.get_job(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="job not found")
        result = store.get_job_result(job_id)
        return {
            "job_id": job.job_id,
            "state": job.state,
            "attempts": job.attempts,
            "lease_expiry": job.lease_expiry,
            "error": job.error,
            "stage_statuses": None if result is None else result.get("stage_statuses"),
        }

    return app
