"""
The REST gateway: trigger and monitor runs over HTTP
====================================================

Everything the browser frontend does goes through this API: register a
graph, trigger a run with a dagrun.cfg document, poll its state, read task
logs incrementally, and list the exported artifacts. Static bearer tokens
guard every endpoint; VIEWER tokens read, OPERATOR tokens act.
"""

import json
import tempfile
import time
import urllib.request
from pathlib import Path

import numpy as np
from PIL import Image

from surveyflow import Engine, MetadataStore, config_to_dag, parse_config, serialize_dagfile
from surveyflow.api import ApiToken, GatewayServer, GatewayService, Role, TokenSet

scratch = Path(tempfile.mkdtemp(prefix="surveyflow-demo06-"))
frames = scratch / "frames"
frames.mkdir()
xx, yy = np.meshgrid(np.arange(64), np.arange(64))
plane = np.where((xx + yy) % 2 == 0, 100, 150).astype(np.uint8)
for i in range(4):
    Image.fromarray(np.stack([plane] * 3, axis=-1)).save(frames / f"frame_{i}.png")

# in-process gateway on an ephemeral port
store = MetadataStore(scratch / "data")
engine = Engine(store)
tokens = TokenSet([ApiToken("operator-secret", Role.OPERATOR), ApiToken("viewer-secret", Role.VIEWER)])
server = GatewayServer(GatewayService(engine, store, tokens), host="127.0.0.1", port=0)
server.start_background()
print("gateway at", server.url)


def api(method: str, path: str, *, token: str = "operator-secret", body: bytes = b"") -> dict:
    request = urllib.request.Request(
        server.url + path,
        data=body if method == "POST" else None,
        method=method,
        headers={"Authorization": f"Bearer {token}"},
    )
    with urllib.request.urlopen(request) as response:
        return json.loads(response.read())


cfg_text = f"""
[project]
name = gateway-demo
input_dir = {frames}
output_dir = {scratch / "out"}

[photogrammetry]
grid_resolution = 25

[ml]
target_long_side_px = 32
"""

# register the pipeline graph that this config describes, then trigger it
config = parse_config(cfg_text)
dagfile = serialize_dagfile(config_to_dag(config))
registered = api("POST", "/api/dags", body=dagfile.encode())
print("registered", registered["dag_id"], "v" + str(registered["version"]))

run_id = api("POST", f"/api/dags/{registered['dag_id']}/runs", body=cfg_text.encode())["run_id"]
print("triggered run", run_id)

# poll until the run settles, the way the UI does
while True:
    run = api("GET", f"/api/runs/{run_id}", token="viewer-secret")["run"]
    states = [inst["state"] for inst in run["task_instances"].values()]
    done = sum(s in ("SUCCESS", "FAILED", "UPSTREAM_FAILED", "SKIPPED") for s in states)
    print(f"  {run['state']:8s} {done}/{len(states)} tasks settled")
    if run["state"] in ("SUCCESS", "FAILED"):
        break
    time.sleep(0.5)

# incremental log reads: pass the offset you were given back in
log = api("GET", f"/api/runs/{run_id}/tasks/pg03_filter/log", token="viewer-secret")
print("\nquality filter log:")
print(log["log"].rstrip())

artifacts = api("GET", f"/api/runs/{run_id}/artifacts", token="viewer-secret")["artifacts"]
print("\nexported artifacts:")
for entry in artifacts[:8]:
    print(f"  {entry['path']:42s} {entry['size_bytes']:8d} bytes")
print(f"  ... {len(artifacts)} files total")

server.shutdown()
store.close()
