"""The service topology over real HTTP
=======================================

Every model stage runs behind the same wire contract, so in-process stubs and
HTTP services are interchangeable. This script starts the four stub model
services plus the backend and an orchestrator worker on localhost, pushes one
image through the whole system, applies an edit, and fetches the karyogram.
"""

import io
import tempfile
import threading
import time
from pathlib import Path

import httpx
import uvicorn
from PIL import Image

from karyopipe.backend.app import make_backend_app
from karyopipe.models.clients import RemoteBackends
from karyopipe.models.services import make_model_app
from karyopipe.models.stubs import STUB_MODEL_VERSION, StubBackends
from karyopipe.orchestrator import PipelineConfig, worker_loop
from karyopipe.storage import Store
from karyopipe.synthgen import SyntheticSpec, generate_spread


class ServerThread:
    def __init__(self, app):
        self.server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1",
                                                    port=0, log_level="error"))
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def start(self):
        self.thread.start()
        while not self.server.started:
            time.sleep(0.01)
        port = self.server.servers[0].sockets[0].getsockname()[1]
        return f"http://127.0.0.1:{port}"

    def stop(self):
        self.server.should_exit = True
        self.thread.join(timeout=10)


db = Path(tempfile.mkdtemp()) / "svc.db"
store = Store(str(db))
store.add_tenant("lab", "Demo Lab", token="demo-token")

stub = StubBackends()
servers = []
urls = {}
for role in ("semseg", "instances", "dedup", "classify"):
    server = ServerThread(make_model_app(stub, role, STUB_MODEL_VERSION,
                                         endpoints=(role,)))
    servers.append(server)
    urls[role] = server.start()
backend_server = ServerThread(make_backend_app(store))
servers.append(backend_server)
base = backend_server.start()
print("services up:", {k: v for k, v in urls.items()})

endpoints = {"semseg": urls["semseg"], "instance": urls["instances"],
             "dedup": urls["dedup"], "classify": urls["classify"]}
stop = threading.Event()
worker = threading.Thread(
    target=worker_loop,
    args=(store, RemoteBackends(endpoints), PipelineConfig(endpoints=endpoints)),
    kwargs={"stop_event": stop}, daemon=True)
worker.start()

image, _ = generate_spread(SyntheticSpec(
    seed=5, canvas_width=800, canvas_height=800,
    class_labels=("3", "7", "9", "13", "16", "20", "X", "Y")))
buf = io.BytesIO()
Image.fromarray(image, mode="L").save(buf, format="PNG")

headers = {"Authorization": "Bearer demo-token"}
image_id = httpx.post(f"{base}/v1/images", headers=headers,
                      files={"file": ("demo.png", buf.getvalue(), "image/png")},
                      timeout=30).json()["image_id"]
job_id = httpx.post(f"{base}/v1/images/{image_id}/jobs", headers=headers,
                    timeout=10).json()["job_id"]
print(f"submitted job {job_id}")

while True:
    status = httpx.get(f"{base}/v1/jobs/{job_id}", headers=headers, timeout=10).json()
    if status["state"] in ("Done", "Partial", "Failed"):
        break
    time.sleep(0.2)
print(f"job finished: {status['state']}, {status['annotation_count']} annotations")

anns = httpx.get(f"{base}/v1/images/{image_id}/annotations", headers=headers,
                 timeout=10).json()
first = anns["annotations"][0]["id"]
edited = httpx.post(f"{base}/v1/images/{image_id}/edits", headers=headers,
                    json={"edit": {"op": "reclassify", "id": first, "class": "21"},
                          "expected_version": 0}, timeout=10).json()
print(f"reclassified annotation {first}; now at version {edited['version']}")

karyogram = httpx.get(f"{base}/v1/images/{image_id}/karyogram", headers=headers,
                      timeout=30)
iscn = httpx.get(f"{base}/v1/images/{image_id}/iscn", headers=headers,
                 timeout=10).json()
print(f"karyogram: {len(karyogram.content)} bytes of PNG; ISCN: {iscn['iscn']}")

stop.set()
worker.join(timeout=10)
for server in servers:
    server.stop()
print("all services stopped")
