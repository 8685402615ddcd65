"""HTTP service tests: wire contracts, transport independence, full topology."""

import json
import threading
import time

import numpy as np
import pytest
import httpx
import uvicorn
from fastapi.testclient import TestClient

from karyopipe.backend.app import make_backend_app
from karyopipe.cascade import CascadeParams, InstanceFrame, SemsegFrame, run_cascade
from karyopipe.models import wire
from karyopipe.models.clients import RemoteBackends
from karyopipe.models.oracle import OracleBackends
from karyopipe.models.services import make_model_app, make_orchestrator_status_app
from karyopipe.models.stubs import STUB_MODEL_VERSION, StubBackends
from karyopipe.orchestrator import PipelineConfig, worker_loop
from karyopipe.storage import Store, canonical_json
from karyopipe.synthgen import SyntheticSpec, generate_spread

SMALL_LABELS = ("1", "4", "8", "13", "17", "21", "X", "Y")


@pytest.fixture(scope="module")
def spread():
    return generate_spread(SyntheticSpec(seed=44, canvas_width=800, canvas_height=800,
                                         class_labels=SMALL_LABELS))


@pytest.fixture(scope="module")
def stub_client():
    app = make_model_app(StubBackends(), "stub-all", STUB_MODEL_VERSION)
    return TestClient(app)


class TestModelApp:
    def test_healthz(self, stub_client):
        body = stub_client.get("/healthz").json()
        assert body == {"service": "stub-all", "model_version": STUB_MODEL_VERSION}

    def test_semseg_endpoint(self, stub_client):
        img = np.full((992, 992), 240, dtype=np.uint8)
        img[100:300, 100:200] = 60
        from karyopipe.imaging import Rect
        frame = SemsegFrame(crop1=Rect(0, 0, 1830, 1830), scale=992 / 1830)
        body = stub_client.post("/v1/semseg",
                                json=wire.semseg_request_to_json(img, "i1", frame)).json()
        result = wire.semseg_response_from_json(body)
        assert result.classes.shape == (992, 992)
        assert (result.classes[100:300, 100:200] == 1).all()
        assert body["model_version"] == STUB_MODEL_VERSION

    def test_instances_endpoint(self, stub_client, spread):
        img, gt = spread
        frame = InstanceFrame(origin=(0, 0))
        body = stub_client.post(
            "/v1/instances",
            json=wire.instances_request_to_json(img, "i2", 0, frame)).json()
        dets, version = wire.instances_response_from_json(body)
        assert len(dets) == len(gt.instances)

    def test_classify_endpoint(self, stub_client):
        patch = np.full((60, 10), 80, dtype=np.uint8)
        mask = np.ones((60, 10), dtype=bool)
        body = stub_client.post(
            "/v1/classify",
            json=wire.classify_request_to_json(patch, mask, False, "i3", (0, 0))).json()
        result = wire.classify_response_from_json(body)
        assert result.rotation_cos == pytest.approx(1.0)
        assert sum(result.class_probs) == pytest.approx(1.0, abs=1e-6)

    def test_classify_empty_mask_422(self, stub_client):
        patch = np.zeros((5, 5), dtype=np.uint8)
        mask = np.zeros((5, 5), dtype=bool)
        r = stub_client.post(
            "/v1/classify",
            json=wire.classify_request_to_json(patch, mask, False, "i4", (0, 0)))
        assert r.status_code == 422

    def test_dedup_endpoint(self, stub_client):
        from karyopipe.cascade import Detection
        from karyopipe.imaging import Rect
        dets = [Detection(mask=np.ones((40, 70), dtype=bool), bbox=Rect(0, 0, 70, 40), score=0.6),
                Detection(mask=np.ones((40, 70), dtype=bool), bbox=Rect(10, 0, 70, 40), score=0.9)]
        body = stub_client.post(
            "/v1/dedup",
            json=wire.dedup_request_to_json(dets, None, "i5",
                                            CascadeParams().to_dict())).json()
        out, _ = wire.dedup_response_from_json(body)
        assert len(out) == 1 and out[0].score == 0.9

    def test_oracle_app_unknown_image_404(self, spread):
        app = make_model_app(OracleBackends(), "oracle", "ground-truth-oracle/1")
        client = TestClient(app)
        img, _ = spread
        frame = InstanceFrame(origin=(0, 0))
        r = client.post("/v1/instances",
                        json=wire.instances_request_to_json(img, "ghost", 0, frame))
        assert r.status_code == 404

    def test_role_app_exposes_single_endpoint(self):
        app = make_model_app(StubBackends(), "semseg", STUB_MODEL_VERSION,
                             endpoints=("semseg",))
        client = TestClient(app)
        assert client.get("/healthz").status_code == 200
        img = np.full((60, 10), 80, dtype=np.uint8)
        mask = np.ones((60, 10), dtype=bool)
        r = client.post("/v1/classify",
                        json=wire.classify_request_to_json(img, mask, False, "x", (0, 0)))
        assert r.status_code in (404, 405)


class TestTransportIndependence:
    def test_remote_equals_in_process(self, spread):
        img, _ = spread
        params = CascadeParams()
        local = run_cascade(img, params, StubBackends(), image_id="t")

        app = make_model_app(StubBackends(), "stub-all", STUB_MODEL_VERSION)
        client = TestClient(app)
        remote_backends = RemoteBackends(
            {k: "http://testserver" for k in ("semseg", "instance", "dedup", "classify")},
            client=client)
        remote = run_cascade(img, params, remote_backends, image_id="t")

        assert remote.state == local.state == "Done"
        local_doc = [wire.annotation_to_json(a) for a in local.annotations]
        remote_doc = [wire.annotation_to_json(a) for a in remote.annotations]
        assert canonical_json(local_doc) == canonical_json(remote_doc)
        assert local.chain.to_dict() == remote.chain.to_dict()


class ServerThread:
    """A uvicorn server on an ephemeral port, run in a daemon thread."""

    def __init__(self, app):
        self.config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
        self.server = uvicorn.Server(self.config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def __enter__(self):
        self.thread.start()
        deadline = time.time() + 15
        while not self.server.started:
            if time.time() > deadline:
                raise RuntimeError("server failed to start")
            time.sleep(0.01)
        self.port = self.server.servers[0].sockets[0].getsockname()[1]
        self.url = f"http://127.0.0.1:{self.port}"
        return self

    def __exit__(self, *exc):
        self.server.should_exit = True
        self.thread.join(timeout=15)


@pytest.mark.integration
def test_full_service_topology(tmp_path, spread):
    """All seven roles on distinct ports; one job travels the whole system."""
    import io
    from PIL import Image

    img, gt = spread
    store = Store(str(tmp_path / "svc.db"))
    store.add_tenant("lab", "Lab", token="sekrit")

    # ground-truth corpus for the oracle role
    from karyopipe.corpus import save_spread
    save_spread(tmp_path / "truth", "upload", img, gt)
    oracle = OracleBackends()
    from karyopipe.corpus import load_truth_dir
    for stem, truth in load_truth_dir(tmp_path / "truth").items():
        oracle.register(stem, truth)

    stub = StubBackends()
    roles = {
        "semseg": make_model_app(stub, "semseg", STUB_MODEL_VERSION, endpoints=("semseg",)),
        "instances": make_model_app(stub, "instances", STUB_MODEL_VERSION, endpoints=("instances",)),
        "dedup": make_model_app(stub, "dedup", STUB_MODEL_VERSION, endpoints=("dedup",)),
        "classify": make_model_app(stub, "classify", STUB_MODEL_VERSION, endpoints=("classify",)),
        "oracle": make_model_app(oracle, "oracle", "ground-truth-oracle/1"),
        "backend": make_backend_app(store),
        "orchestrator": make_orchestrator_status_app(store),
    }
    servers = {}
    stack = []
    try:
        for name, app in roles.items():
            server = ServerThread(app).__enter__()
            stack.append(server)
            servers[name] = server

        # every role answers /healthz within a second
        for name, server in servers.items():
            r = httpx.get(f"{server.url}/healthz", timeout=1.0)
            assert r.status_code == 200, name

        endpoints = {"semseg": servers["semseg"].url,
                     "instance": servers["instances"].url,
                     "dedup": servers["dedup"].url,
                     "classify": servers["classify"].url}
        pipeline = PipelineConfig(endpoints=endpoints, lease_seconds=120.0,
                                  poll_interval=0.02)
        remote = RemoteBackends(endpoints)
        stop = threading.Event()
        worker = threading.Thread(target=worker_loop, args=(store, remote, pipeline),
                                  kwargs={"stop_event": stop}, daemon=True)
        worker.start()

        base = servers["backend"].url
        headers = {"Authorization": "Bearer sekrit"}
        buf = io.BytesIO()
        Image.fromarray(img, mode="L").save(buf, format="PNG")
        r = httpx.post(f"{base}/v1/images", headers=headers,
                       files={"file": ("upload.png", buf.getvalue(), "image/png")},
                       timeout=30.0)
        assert r.status_code == 200
        image_id = r.json()["image_id"]
        r = httpx.post(f"{base}/v1/images/{image_id}/jobs", headers=headers, timeout=10.0)
        job_id = r.json()["job_id"]

        deadline = time.time() + 60
        state = None
        while time.time() < deadline:
            state = httpx.get(f"{base}/v1/jobs/{job_id}", headers=headers,
                              timeout=10.0).json()["state"]
            if state in ("Done", "Partial", "Failed"):
                break
            time.sleep(0.2)
        assert state == "Done"

        # orchestrator status surface sees the same job
        r = httpx.get(f"{servers['orchestrator'].url}/v1/jobs/{job_id}/status",
                      timeout=10.0)
        assert r.json()["state"] == "Done"

        anns = httpx.get(f"{base}/v1/images/{image_id}/annotations",
                         headers=headers, timeout=10.0).json()
        assert len(anns["annotations"]) == len(gt.instances)

        r = httpx.post(f"{base}/v1/images/{image_id}/edits", headers=headers,
                       json={"edit": {"op": "delete", "id": anns["annotations"][0]["id"]},
                             "expected_version": 0}, timeout=10.0)
        assert r.status_code == 200 and r.json()["version"] == 1

        r = httpx.get(f"{base}/v1/images/{image_id}/karyogram", headers=headers,
                      timeout=30.0)
        assert r.headers["content-type"] == "image/png"
        r = httpx.get(f"{base}/v1/images/{image_id}/iscn", headers=headers, timeout=10.0)
        assert "iscn" in r.json()

        # the oracle service answers the wire contract for the uploaded stem
        frame = InstanceFrame(origin=(0, 0))
        r = httpx.post(f"{servers['oracle'].url}/v1/instances",
                       json=wire.instances_request_to_json(img, "upload", 0, frame),
                       timeout=30.0)
        dets, _ = wire.instances_response_from_json(r.json())
        assert len(dets) == len(gt.instances)

        stop.set()
        worker.join(timeout=15)
    finally:
        for server in stack:
            server.__exit__()
