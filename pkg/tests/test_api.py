"""REST control plane: endpoint contracts, auth, polling idempotence."""

from __future__ import annotations

import json
import time
import urllib.request

import pytest

from surveyflow import DagSpec, Engine, MetadataStore, TaskSpec, serialize_dagfile
from surveyflow.api import ApiToken, GatewayService, Role, TokenSet
from surveyflow.api.server import GatewayServer
from surveyflow.api.service import ROUTES

OPERATOR = "op-token-123"
VIEWER = "view-token-456"


@pytest.fixture
def service(tmp_path, survey_dir):
    store = MetadataStore(tmp_path / "data")
    engine = Engine(store)
    tokens = TokenSet([ApiToken(OPERATOR, Role.OPERATOR), ApiToken(VIEWER, Role.VIEWER)])
    svc = GatewayService(engine, store, tokens)
    svc.tmp_path = tmp_path  # type: ignore[attr-defined]
    svc.survey_dir = survey_dir  # type: ignore[attr-defined]
    yield svc
    store.close()


def call(svc, method, path, *, token=OPERATOR, query="", body=b""):
    auth = f"Bearer {token}" if token else None
    response = svc.handle(method, path, query, auth, body)
    payload = json.loads(response.body) if response.content_type == "application/json" else None
    return response.status, payload


def sample_dagfile() -> str:
    spec = DagSpec(
        "contract",
        1,
        (
            TaskSpec("a", "compute"),
            TaskSpec("b", "compute", upstream=("a",)),
        ),
    )
    return serialize_dagfile(spec)


def config_text(svc) -> str:
    return (
        f"[project]\nname = api\ninput_dir = {svc.survey_dir}\n"
        f"output_dir = {svc.tmp_path / 'out'}\n"
    )


def trigger_and_wait(svc, dag_id: str) -> str:
    status, payload = call(svc, "POST", f"/api/dags/{dag_id}/runs", body=config_text(svc).encode())
    assert status == 202
    run_id = payload["run_id"]
    svc.engine.wait_run(run_id, timeout=30)
    return run_id


# -- dag registration ---------------------------------------------------------------


def test_register_dag_created(service):
    status, payload = call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    assert status == 201
    assert payload["dag_id"] == "contract"
    assert payload["version"] == 1


def test_register_invalid_dag_422_with_report(service):
    bad = serialize_dagfile(
        DagSpec("cyc", 1, (TaskSpec("a", "compute", upstream=("b",)), TaskSpec("b", "compute", upstream=("a",))))
    )
    status, payload = call(service, "POST", "/api/dags", body=bad.encode())
    assert status == 422
    assert payload["ok"] is False
    assert any(e["code"] == "CYCLE" for e in payload["errors"])


def test_register_unparseable_document_422(service):
    status, payload = call(service, "POST", "/api/dags", body=b"not a dagfile")
    assert status == 422
    assert payload["errors"][0]["code"] == "PARSE"


def test_reregistration_bumps_version(service):
    call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    status, payload = call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    assert status == 201
    assert payload["version"] == 2


def test_list_and_get_dag(service):
    call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    status, payload = call(service, "GET", "/api/dags", token=VIEWER)
    assert status == 200
    assert payload["dags"][0]["dag_id"] == "contract"
    status, payload = call(service, "GET", "/api/dags/contract", token=VIEWER)
    assert status == 200
    assert [t["task_id"] for t in payload["tasks"]] == ["a", "b"]


# -- trigger and inspect runs -----------------------------------------------------------


def test_trigger_run_visible_in_listing(service):
    call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    run_id = trigger_and_wait(service, "contract")
    status, payload = call(service, "GET", "/api/runs", token=VIEWER)
    assert status == 200
    assert [r["run_id"] for r in payload["runs"]] == [run_id]
    assert payload["runs"][0]["state"] == "SUCCESS"

    status, payload = call(service, "GET", f"/api/runs/{run_id}", token=VIEWER)
    assert status == 200
    assert payload["run"]["state"] == "SUCCESS"
    assert set(payload["run"]["task_instances"]) == {"a", "b"}


def test_trigger_with_bad_config_422(service):
    call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    status, payload = call(service, "POST", "/api/dags/contract/runs", body=b"[project]\n")
    assert status == 422
    assert payload["errors"][0]["code"] == "CONFIG"


def test_trigger_unknown_dag_404(service):
    status, _ = call(service, "POST", "/api/dags/ghost/runs", body=config_text(service).encode())
    assert status == 404


def test_run_filters_by_state(service):
    call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    run_id = trigger_and_wait(service, "contract")
    status, payload = call(service, "GET", "/api/runs", token=VIEWER, query="state=FAILED")
    assert status == 200
    assert payload["runs"] == []
    status, payload = call(service, "GET", "/api/runs", token=VIEWER, query="state=SUCCESS")
    assert [r["run_id"] for r in payload["runs"]] == [run_id]


def test_get_unknown_run_404(service):
    status, _ = call(service, "GET", "/api/runs/doesnotexist", token=VIEWER)
    assert status == 404


# -- pause / resume / retry over HTTP semantics ---------------------------------------------


def test_pause_completed_run_409(service):
    call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    run_id = trigger_and_wait(service, "contract")
    status, payload = call(service, "POST", f"/api/runs/{run_id}/pause")
    assert status == 409
    assert "pause" in payload["error"]


def test_resume_completed_run_409(service):
    call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    run_id = trigger_and_wait(service, "contract")
    status, _ = call(service, "POST", f"/api/runs/{run_id}/resume")
    assert status == 409


def test_retry_flow_over_api(service):
    flaky = serialize_dagfile(
        DagSpec(
            "flaky",
            1,
            (
                TaskSpec("a", "compute"),
                TaskSpec("b", "flaky", params={"fail_attempts": "1"}, upstream=("a",)),
                TaskSpec("c", "compute", upstream=("b",)),
            ),
        )
    )
    call(service, "POST", "/api/dags", body=flaky.encode())
    run_id = trigger_and_wait(service, "flaky")
    status, payload = call(service, "GET", f"/api/runs/{run_id}", token=VIEWER)
    assert payload["run"]["state"] == "FAILED"

    status, payload = call(service, "POST", f"/api/runs/{run_id}/tasks/b/retry")
    assert status == 200
    assert payload["state"] == "RUNNING"
    service.engine.wait_run(run_id, timeout=30)
    status, payload = call(service, "GET", f"/api/runs/{run_id}", token=VIEWER)
    assert payload["run"]["state"] == "SUCCESS"


def test_retry_non_retriable_409(service):
    call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    run_id = trigger_and_wait(service, "contract")
    status, _ = call(service, "POST", f"/api/runs/{run_id}/tasks/a/retry")
    assert status == 409


def test_retry_unknown_task_404(service):
    call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    run_id = trigger_and_wait(service, "contract")
    status, _ = call(service, "POST", f"/api/runs/{run_id}/tasks/ghost/retry")
    assert status == 404


# -- logs and artifacts --------------------------------------------------------------------------


def test_log_polling_with_offsets(service):
    call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    run_id = trigger_and_wait(service, "contract")
    status, payload = call(service, "GET", f"/api/runs/{run_id}/tasks/a/log", token=VIEWER)
    assert status == 200
    assert "computed" in payload["log"]
    offset = payload["next_offset"]
    status, payload = call(
        service, "GET", f"/api/runs/{run_id}/tasks/a/log", token=VIEWER, query=f"offset={offset}"
    )
    assert payload["log"] == ""
    assert payload["next_offset"] == offset


def test_artifact_listing_and_download(service):
    call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    run_id = trigger_and_wait(service, "contract")
    run_dir = service.tmp_path / "out" / run_id
    (run_dir / "report.txt").write_text("done", encoding="utf-8")

    status, payload = call(service, "GET", f"/api/runs/{run_id}/artifacts", token=VIEWER)
    assert status == 200
    paths = [a["path"] for a in payload["artifacts"]]
    assert "report.txt" in paths
    assert not any(p.startswith("work/") for p in paths)  # staging excluded

    response = service.handle(
        "GET", f"/api/runs/{run_id}/artifacts/report.txt", "", f"Bearer {VIEWER}", b""
    )
    assert response.status == 200
    assert response.body == b"done"


def test_artifact_path_escape_is_404(service):
    call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    run_id = trigger_and_wait(service, "contract")
    status, _ = call(service, "GET", f"/api/runs/{run_id}/artifacts/../../etc/passwd", token=VIEWER)
    assert status == 404


# -- auth ---------------------------------------------------------------------------------------------


def test_every_route_rejects_missing_token_401(service):
    for method, pattern, _, _ in ROUTES:
        path = (
            pattern.strip("^$")
            .replace(r"(?P<dag_id>[^/]+)", "d")
            .replace(r"(?P<run_id>[^/]+)", "r")
            .replace(r"(?P<task_id>[^/]+)", "t")
            .replace(r"(?P<artifact>.+)", "a.txt")
        )
        status, payload = call(service, method, path, token=None)
        assert status == 401, f"{method} {path} let an anonymous request through"
        assert "token" in payload["error"]


def test_unknown_token_401(service):
    status, _ = call(service, "GET", "/api/runs", token="forged")
    assert status == 401


def test_viewer_cannot_mutate_403(service):
    call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    run_id = trigger_and_wait(service, "contract")
    for method, path in [
        ("POST", "/api/dags"),
        ("POST", "/api/dags/contract/runs"),
        ("POST", f"/api/runs/{run_id}/pause"),
        ("POST", f"/api/runs/{run_id}/resume"),
        ("POST", f"/api/runs/{run_id}/tasks/a/retry"),
    ]:
        status, payload = call(service, method, path, token=VIEWER, body=b"x")
        assert status == 403, f"{method} {path} allowed a viewer"


def test_viewer_can_read(service):
    status, _ = call(service, "GET", "/api/runs", token=VIEWER)
    assert status == 200


def test_unrouted_path_404(service):
    status, _ = call(service, "GET", "/api/nope")
    assert status == 404


# -- polling idempotence -----------------------------------------------------------------------------


def test_consecutive_gets_identical_without_events(service):
    call(service, "POST", "/api/dags", body=sample_dagfile().encode())
    run_id = trigger_and_wait(service, "contract")
    for path, query in [
        ("/api/runs", ""),
        (f"/api/runs/{run_id}", ""),
        (f"/api/runs/{run_id}/tasks/a/log", ""),
        (f"/api/runs/{run_id}/artifacts", ""),
        ("/api/dags", ""),
    ]:
        first = service.handle("GET", path, query, f"Bearer {VIEWER}", b"")
        second = service.handle("GET", path, query, f"Bearer {VIEWER}", b"")
        assert first.body == second.body, f"{path} not idempotent"


# -- live HTTP smoke -----------------------------------------------------------------------------------


def test_live_server_round_trip(service):
    server = GatewayServer(service, host="127.0.0.1", port=0)
    server.start_background()
    try:
        url = server.url
        request = urllib.request.Request(
            f"{url}/api/dags",
            data=sample_dagfile().encode(),
            method="POST",
            headers={"Authorization": f"Bearer {OPERATOR}"},
        )
        with urllib.request.urlopen(request) as response:
            assert response.status == 201
            assert json.loads(response.read())["dag_id"] == "contract"

        listing = urllib.request.Request(
            f"{url}/api/dags", headers={"Authorization": f"Bearer {VIEWER}"}
        )
        with urllib.request.urlopen(listing) as response:
            assert response.status == 200

        bare = urllib.request.Request(f"{url}/api/dags")
        with pytest.raises(urllib.error.HTTPError) as excinfo:
            urllib.request.urlopen(bare)
        assert excinfo.value.code == 401

        preflight = urllib.request.Request(f"{url}/api/dags", method="OPTIONS")
        with urllib.request.urlopen(preflight) as response:
            assert response.status == 204
            assert response.headers["Access-Control-Allow-Origin"] == "*"
    finally:
        server.shutdown()


def test_trigger_starts_asynchronously(service):
    slow = serialize_dagfile(
        DagSpec("slow", 1, (TaskSpec("s", "sleep", params={"seconds": "0.4"}),))
    )
    call(service, "POST", "/api/dags", body=slow.encode())
    t0 = time.monotonic()
    status, payload = call(service, "POST", "/api/dags/slow/runs", body=config_text(service).encode())
    elapsed = time.monotonic() - t0
    assert status == 202
    assert elapsed < 0.35  # accepted before the task finished
    service.engine.wait_run(payload["run_id"], timeout=10)
