"""HTTP StageBackends client: the orchestrator side of the wire contract.

Timeouts are per stage; retries are the caller's concern (the cascade driver
retries once before applying the degraded fallback).
"""

from __future__ import annotations

import numpy as np
import httpx

from ..cascade import (
    CascadeParams,
    ClassifyResult,
    Detection,
    InstanceFrame,
    InstancesResult,
    SemsegFrame,
    SemsegResult,
)
from . import wire

__all__ = ["RemoteBackends"]

_DEFAULT_TIMEOUT_MS = 30_000


class RemoteBackends:
    """Calls the four model services over HTTP.

    `endpoints` maps stage keys (semseg, instance, dedup, classify) to base
    URLs; one URL may serve several stages (the oracle service does).
    """

    def __init__(self, endpoints: dict[str, str],
                 timeout_ms: dict[str, int] | None = None,
                 client: httpx.Client | None = None):
        self.endpoints = {k: v.rstrip("/") for k, v in endpoints.items()}
        self.timeout_ms = timeout_ms or {}
        self._client = client or httpx.Client()

    def _post(self, stage_key: str, path: str, body: dict) -> dict:
        base = self.endpoints[stage_key]
        timeout = self.timeout_ms.get(stage_key, _DEFAULT_TIMEOUT_MS) / 1000.0
        response = self._client.post(f"{base}{path}", json=body, timeout=timeout)
        response.raise_for_status()
        return response.json()

    def semseg(self, image: np.ndarray, image_id: str, frame: SemsegFrame) -> SemsegResult:
        body = wire.semseg_request_to_json(image, image_id, frame)
        return wire.semseg_response_from_json(self._post("semseg", "/v1/semseg", body))

    def instances(self, image: np.ndarray, image_id: str, angle_tag: int,
                  frame: InstanceFrame) -> InstancesResult:
        body = wire.instances_request_to_json(image, image_id, angle_tag, frame)
        dets, version = wire.instances_response_from_json(
            self._post("instance", "/v1/instances", body))
        return InstancesResult(detections=dets, model_version=version)

    def dedup(self, detections: list[Detection], semantic: np.ndarray | None,
              image_id: str, params: CascadeParams) -> list[Detection]:
        body = wire.dedup_request_to_json(detections, semantic, image_id,
                                          params.to_dict())
        dets, _ = wire.dedup_response_from_json(self._post("dedup", "/v1/dedup", body))
        return dets

    def classify(self, patch: np.ndarray, mask: np.ndarray, augmented: bool,
                 image_id: str, origin: tuple[int, int]) -> ClassifyResult:
        body = wire.classify_request_to_json(patch, mask, augmented, image_id, origin)
        return wire.classify_response_from_json(
            self._post("classify", "/v1/classify", body))

    def close(self) -> None:
        self._client.close()
