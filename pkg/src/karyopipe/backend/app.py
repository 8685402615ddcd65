"""Multi-tenant REST API over the store.

Every resource route requires a bearer token mapping to a tenant; lookups are
tenant-scoped, so foreign ids are indistinguishable from missing ones (404).
"""

from __future__ import annotations

import json

from fastapi import Depends, FastAPI, File, Header, HTTPException, Response, UploadFile

from ..errors import (
    CorruptImage,
    SignedOffImmutable,
    UnknownAnnotation,
    UnknownVersion,
    UnsupportedFormat,
    VersionConflict,
)
from ..storage import Store
from . import editing, ingest
from .karyogram import compose_karyogram, iscn_suggest, render_karyogram_png

__all__ = ["make_backend_app"]

BACKEND_VERSION = "backend/1"


def make_backend_app(store: Store) -> FastAPI:
    app = FastAPI(title="karyotyping backend")

    def tenant_of(authorization: str = Header(default="")) -> str:
        if not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        tenant = store.tenant_for_token(authorization.removeprefix("Bearer ").strip())
        if tenant is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return tenant

    def image_or_404(image_id: str, tenant: str):
        record = store.get_image(image_id, tenant_id=tenant)
        if record is None:
            raise HTTPException(status_code=404, detail="image not found")
        return record

    @app.get("/healthz")
    def healthz():
        return {"service": "backend", "model_version": BACKEND_VERSION}

    @app.post("/v1/images")
    async def upload_image(file: UploadFile = File(...),
                           tenant: str = Depends(tenant_of)):
        data = await file.read()
        try:
            record = ingest.ingest(store, data, file.filename or "upload.png", tenant)
        except UnsupportedFormat as exc:
            raise HTTPException(status_code=415, detail=str(exc))
        except CorruptImage as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {
            "image_id": record.image_id,
            "filename": record.filename,
            "width": record.width,
            "height": record.height,
            "clinical": {
                "patient_id": record.patient_id,
                "year": record.year,
                "image_no": record.image_no,
                "cultivation": record.cultivation,
                "type": record.culture_type,
            },
        }

    @app.post("/v1/images/{image_id}/jobs")
    def submit_job(image_id: str, tenant: str = Depends(tenant_of)):
        image_or_404(image_id, tenant)
        job = store.submit_job(tenant, image_id)
        return {"job_id": job.job_id, "state": job.state}

    @app.get("/v1/jobs/{job_id}")
    def job_status(job_id: str, tenant: str = Depends(tenant_of)):
        job = store.get_job(job_id, tenant_id=tenant)
        if job is None:
            raise HTTPException(status_code=404, detail="job not found")
        result = store.get_job_result(job_id)
        return {
            "job_id": job.job_id,
            "image_id": job.image_id,
            "state": job.state,
            "attempts": job.attempts,
            "error": job.error,
            "stage_statuses": None if result is None else result.get("stage_statuses"),
            "annotation_count": None if result is None else len(result.get("annotations", [])),
        }

    @app.get("/v1/images/{image_id}/annotations")
    def annotations(image_id: str, version: int | None = None,
                    tenant: str = Depends(tenant_of)):
        image_or_404(image_id, tenant)
        latest = store.latest_annotation_version(image_id)
        if latest is None:
            raise HTTPException(status_code=404, detail="no annotations yet")
        v = latest[0] if version is None else version
        payload = store.get_annotation_set(image_id, v)
        if payload is None:
            raise HTTPException(status_code=404, detail=f"version {v} not found")
        payload["signed_off"] = latest[1] and v == latest[0]
        payload["latest_version"] = latest[0]
        return payload

    @app.post("/v1/images/{image_id}/edits")
    def post_edit(image_id: str, body: dict, tenant: str = Depends(tenant_of)):
        image_or_404(image_id, tenant)
        edit = body.get("edit")
        expected = body.get("expected_version")
        actor = body.get("actor", tenant)
        if not isinstance(edit, dict) or not isinstance(expected, int):
            raise HTTPException(status_code=422,
                                detail="body needs {edit: {...}, expected_version: int}")
        try:
            payload, event = editing.apply_edit(store, image_id, tenant, actor,
                                                edit, expected)
        except VersionConflict as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except SignedOffImmutable as exc:
            raise HTTPException(status_code=423, detail=str(exc))
        except UnknownVersion as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except (UnknownAnnotation, ValueError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=f"invalid edit: {exc}")
        return {"version": payload["version"], "event_id": event.event_id,
                "annotations": payload["annotations"]}

    @app.get("/v1/images/{image_id}/audit")
    def audit(image_id: str, tenant: str = Depends(tenant_of)):
        image_or_404(image_id, tenant)
        events = store.audit_events(image_id)
        return {"events": [{
            "event_id": e.event_id,
            "actor": e.actor,
            "at": e.at,
            "edit": e.edit,
            "resulting_version": e.resulting_version,
        } for e in events]}

    @app.post("/v1/images/{image_id}/signoff")
    def signoff(image_id: str, body: dict | None = None,
                tenant: str = Depends(tenant_of)):
        image_or_404(image_id, tenant)
        if store.latest_annotation_version(image_id) is None:
            raise HTTPException(status_code=404, detail="no annotations yet")
        actor = (body or {}).get("actor", tenant)
        version = store.sign_off(image_id, actor)
        return {"signed_off_version": version, "signoff_user": actor}

    @app.get("/v1/images/{image_id}/raster")
    def raster(image_id: str, tenant: str = Depends(tenant_of)):
        image_or_404(image_id, tenant)
        pixels = store.get_image_pixels(image_id)
        import io

        from PIL import Image
        buf = io.BytesIO()
        Image.fromarray(pixels, mode="L").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/v1/images/{image_id}/karyogram")
    def karyogram(image_id: str, version: int | None = None,
                  tenant: str = Depends(tenant_of)):
        image_or_404(image_id, tenant)
        latest = store.latest_annotation_version(image_id)
        if latest is None:
            raise HTTPException(status_code=404, detail="no annotations yet")
        v = latest[0] if version is None else version
        payload = store.get_annotation_set(image_id, v)
        if payload is None:
            raise HTTPException(status_code=404, detail=f"version {v} not found")
        pixels = store.get_image_pixels(image_id)
        layout = compose_karyogram(payload["annotations"], pixels)
        png = render_karyogram_png(layout)
        groups = json.dumps(layout.groups)
        return Response(content=png, media_type="image/png",
                        headers={"X-Karyogram-Groups": groups})

    @app.get("/v1/images/{image_id}/iscn")
    def iscn(image_id: str, version: int | None = None,
             tenant: str = Depends(tenant_of)):
        image_or_404(image_id, tenant)
        latest = store.latest_annotation_version(image_id)
        if latest is None:
            raise HTTPException(status_code=404, detail="no annotations yet")
        v = latest[0] if version is None else version
        payload = store.get_annotation_set(image_id, v)
        if payload is None:
            raise HTTPException(status_code=404, detail=f"version {v} not found")
        suggestion, uncertain = iscn_suggest(payload["annotations"])
        return {"iscn": suggestion, "uncertain": uncertain, "version": v}

    return app
