"""Request handling for the gateway API, independent of HTTP plumbing.

Every endpoint requires a bearer token; VIEWER tokens may only read,
OPERATOR tokens may also trigger, pause, resume, and retry. Responses are
JSON documents carrying an ``api_version`` field; the full contract lives in
docs/api_reference.md. Handlers hold no private state: everything served is
read back from the metadata store, so two consecutive reads with no
intervening events return identical bodies.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from urllib.parse import parse_qs

from ..config import ConfigError, parse_config
from ..dag import DagValidationError
from ..dagfile import DagfileParseError, parse_dagfile
from ..engine import Engine, ExecutorUnavailableError, StateConflictError, UnknownDagError, UnknownRunError
from ..states import RunState
from ..store import MetadataStore
from ..utils import sha256_file

API_VERSION = "1"


class Role(str, Enum):
    OPERATOR = "OPERATOR"
    VIEWER = "VIEWER"


@dataclass(frozen=True)
class ApiToken:
    token: str
    role: Role


class TokenSet:
    """Static bearer tokens from a config file: one ``<token> <ROLE>`` per line."""

    def __init__(self, tokens: list[ApiToken]) -> None:
        self._by_value = {t.token: t for t in tokens}

    @classmethod
    def from_file(cls, path: str | Path) -> "TokenSet":
        tokens = []
        for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"tokens file line {line_no}: expected '<token> <ROLE>'")
            tokens.append(ApiToken(token=parts[0], role=Role(parts[1].upper())))
        return cls(tokens)

    def lookup(self, token: str | None) -> ApiToken | None:
        if not token:
            return None
        return self._by_value.get(token)


@dataclass(frozen=True)
class ApiResponse:
    status: int
    body: bytes
    content_type: str = "application/json"

    @classmethod
    def json(cls, status: int, payload: dict) -> "ApiResponse":
        payload = {"api_version": API_VERSION, **payload}
        return cls(status=status, body=json.dumps(payload, sort_keys=True).encode("utf-8"))

    @classmethod
    def error(cls, status: int, message: str, **extra) -> "ApiResponse":
        return cls.json(status, {"error": message, **extra})


# (method, path regex, handler name, minimum role)
ROUTES: list[tuple[str, str, str, Role]] = [
    ("POST", r"^/api/dags$", "register_dag", Role.OPERATOR),
    ("GET", r"^/api/dags$", "list_dags", Role.VIEWER),
    ("GET", r"^/api/dags/(?P<dag_id>[^/]+)$", "get_dag", Role.VIEWER),
    ("POST", r"^/api/dags/(?P<dag_id>[^/]+)/runs$", "trigger_run", Role.OPERATOR),
    ("GET", r"^/api/runs$", "list_runs", Role.VIEWER),
    ("GET", r"^/api/runs/(?P<run_id>[^/]+)$", "get_run", Role.VIEWER),
    ("POST", r"^/api/runs/(?P<run_id>[^/]+)/pause$", "pause_run", Role.OPERATOR),
    ("POST", r"^/api/runs/(?P<run_id>[^/]+)/resume$", "resume_run", Role.OPERATOR),
    ("POST", r"^/api/runs/(?P<run_id>[^/]+)/tasks/(?P<task_id>[^/]+)/retry$", "retry_task", Role.OPERATOR),
    ("GET", r"^/api/runs/(?P<run_id>[^/]+)/tasks/(?P<task_id>[^/]+)/log$", "get_log", Role.VIEWER),
    ("GET", r"^/api/runs/(?P<run_id>[^/]+)/artifacts$", "list_artifacts", Role.VIEWER),
    ("GET", r"^/api/runs/(?P<run_id>[^/]+)/artifacts/(?P<artifact>.+)$", "download_artifact", Role.VIEWER),
]


class GatewayService:
    """Routes authenticated requests to the engine and store."""

    def __init__(self, engine: Engine, store: MetadataStore, tokens: TokenSet) -> None:
        self.engine = engine
        self.store = store
        self.tokens = tokens
        self._routes = [
            (method, re.compile(pattern), getattr(self, handler), role)
            for method, pattern, handler, role in ROUTES
        ]

    def handle(
        self,
        method: str,
        path: str,
        query_string: str = "",
        authorization: str | None = None,
        body: bytes = b"",
    ) -> ApiResponse:
        token = self.tokens.lookup(_bearer_token(authorization))
        if token is None:
            return ApiResponse.error(401, "missing or unknown bearer token")

        for route_method, pattern, handler, min_role in self._routes:
            if route_method != method:
                continue
            match = pattern.match(path)
            if match is None:
                continue
            if min_role is Role.OPERATOR and token.role is not Role.OPERATOR:
                return ApiResponse.error(403, f"{token.role.value} tokens cannot {method} {path}")
            query = {k: v[0] for k, v in parse_qs(query_string).items()}
            try:
                return handler(match.groupdict(), query, body)
            except (UnknownRunError, UnknownDagError) as exc:
                return ApiResponse.error(404, str(exc))
            except StateConflictError as exc:
                return ApiResponse.error(409, str(exc))
            except ExecutorUnavailableError as exc:
                return ApiResponse.error(409, str(exc))
            except DagValidationError as exc:
                return ApiResponse.json(
                    422,
                    {"ok": False, "errors": [{"code": e.code.value, "detail": e.detail} for e in exc.report.errors]},
                )
            except DagfileParseError as exc:
                return ApiResponse.json(422, {"ok": False, "errors": [{"code": "PARSE", "detail": str(exc)}]})
            except ConfigError as exc:
                return ApiResponse.json(422, {"ok": False, "errors": [{"code": "CONFIG", "detail": str(exc)}]})
        return ApiResponse.error(404, f"no route for {method} {path}")

    # -- dag endpoints --------------------------------------------------------

    def register_dag(self, params: dict, query: dict, body: bytes) -> ApiResponse:
        spec = parse_dagfile(body.decode("utf-8"))
        dag_id, version = self.engine.register_dag(spec)
        return ApiResponse.json(201, {"dag_id": dag_id, "version": version})

    def list_dags(self, params: dict, query: dict, body: bytes) -> ApiResponse:
        dags = [
            {"dag_id": spec.dag_id, "version": spec.version, "task_count": len(spec.tasks)}
            for spec in sorted(self.store.state().dags.values(), key=lambda s: s.dag_id)
        ]
        return ApiResponse.json(200, {"dags": dags})

    def get_dag(self, params: dict, query: dict, body: bytes) -> ApiResponse:
        spec = self.store.get_dag(params["dag_id"])
        if spec is None:
            raise UnknownDagError(f"no dag {params['dag_id']!r}")
        tasks = [
            {"task_id": t.task_id, "kind": t.kind, "upstream": list(t.upstream)} for t in spec.tasks
        ]
        return ApiResponse.json(200, {"dag_id": spec.dag_id, "version": spec.version, "tasks": tasks})

    # -- run endpoints -----------------------------------------------------------

    def trigger_run(self, params: dict, query: dict, body: bytes) -> ApiResponse:
        run_id = self.engine.trigger_run(params["dag_id"], body.decode("utf-8"))
        return ApiResponse.json(202, {"run_id": run_id})

    def list_runs(self, params: dict, query: dict, body: bytes) -> ApiResponse:
        state = RunState(query["state"]) if query.get("state") else None
        since = datetime.fromisoformat(query["since"]) if query.get("since") else None
        summaries = self.engine.query_runs(dag_id=query.get("dag_id") or None, state=state, since=since)
        return ApiResponse.json(200, {"runs": [s.to_payload() for s in summaries]})

    def get_run(self, params: dict, query: dict, body: bytes) -> ApiResponse:
        record = self.engine.get_run(params["run_id"])
        return ApiResponse.json(200, {"run": record.to_payload()})

    def pause_run(self, params: dict, query: dict, body: bytes) -> ApiResponse:
        record = self.engine.pause_run(params["run_id"])
        return ApiResponse.json(200, {"run_id": record.run_id, "state": record.state.value})

    def resume_run(self, params: dict, query: dict, body: bytes) -> ApiResponse:
        record = self.engine.resume_run(params["run_id"])
        return ApiResponse.json(200, {"run_id": record.run_id, "state": record.state.value})

    def retry_task(self, params: dict, query: dict, body: bytes) -> ApiResponse:
        record = self.engine.retry_task(params["run_id"], params["task_id"])
        record = self.engine.resume_run(record.run_id)
        return ApiResponse.json(
            200, {"run_id": record.run_id, "task_id": params["task_id"], "state": record.state.value}
        )

    def get_log(self, params: dict, query: dict, body: bytes) -> ApiResponse:
        record = self.engine.get_run(params["run_id"])
        if params["task_id"] not in record.task_instances:
            raise UnknownRunError(f"no task {params['task_id']!r} in run {record.run_id}")
        offset = int(query.get("offset", "0"))
        text, next_offset = self.store.read_task_log(record.run_id, params["task_id"], offset)
        return ApiResponse.json(200, {"log": text, "next_offset": next_offset})

    # -- artifacts ------------------------------------------------------------------

    def list_artifacts(self, params: dict, query: dict, body: bytes) -> ApiResponse:
        run_dir = self._run_dir(params["run_id"])
        artifacts = []
        if run_dir.is_dir():
            for path in sorted(run_dir.rglob("*")):
                if not path.is_file():
                    continue
                rel = path.relative_to(run_dir)
                if rel.parts and rel.parts[0] == "work":
                    continue  # staging files are not deliverables
                artifacts.append(
                    {
                        "path": str(rel),
                        "size_bytes": path.stat().st_size,
                        "sha256": sha256_file(path),
                    }
                )
        return ApiResponse.json(200, {"run_id": params["run_id"], "artifacts": artifacts})

    def download_artifact(self, params: dict, query: dict, body: bytes) -> ApiResponse:
        run_dir = self._run_dir(params["run_id"]).resolve()
        target = (run_dir / params["artifact"]).resolve()
        if not str(target).startswith(str(run_dir) + "/") or not target.is_file():
            raise UnknownRunError(f"no artifact {params['artifact']!r}")
        return ApiResponse(status=200, body=target.read_bytes(), content_type="application/octet-stream")

    def _run_dir(self, run_id: str) -> Path:
        record = self.engine.get_run(run_id)
        config = parse_config(record.config_text)
        return Path(config.project.output_dir) / run_id


def _bearer_token(authorization: str | None) -> str | None:
    if not authorization:
        return None
    scheme, _, value = authorization.partition(" ")
    if scheme.lower() != "bearer" or not value.strip():
        return None
    return value.strip()
