"""Durable, event-sourced persistence for graphs, runs, task states, and logs.

Layout under ``data_dir``:

    events.log                  one JSON record per line, append-only
    snapshots/<seq>.snap        full-state snapshot written every N events
    runs/<run_id>/logs/<task_id>.txt   task log bodies (UTF-8, line-buffered)

The event log is the source of truth; snapshots only bound replay time.
Appends are serialized internally and each event is flushed (and fsynced by
default) before the call returns. Replay of a directory reconstructs exactly
the state at the last acknowledged event; a torn or corrupt tail is truncated
to the last valid record and reported.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterator

from .dag import DagSpec
from .dagfile import parse_dagfile, serialize_dagfile
from .records import ExecutorKind, RunRecord, RunSummary, TaskInstance, utc_now
from .states import RunState, TaskState, is_legal_task_transition

SNAPSHOT_INTERVAL_DEFAULT = 100


class EventKind(str, Enum):
    DAG_REGISTERED = "DAG_REGISTERED"
    RUN_CREATED = "RUN_CREATED"
    TASK_STATE_CHANGED = "TASK_STATE_CHANGED"
    RUN_STATE_CHANGED = "RUN_STATE_CHANGED"
    LOG_APPENDED = "LOG_APPENDED"


@dataclass(frozen=True)
class StoreEvent:
    seq: int
    at: datetime
    kind: EventKind
    payload: dict[str, Any]

    def to_line(self) -> str:
        return json.dumps(
            {"seq": self.seq, "at": self.at.isoformat(), "kind": self.kind.value, "payload": self.payload},
            separators=(",", ":"),
            sort_keys=True,
        )


class StoreError(ValueError):
    """Malformed payload or unusable store content."""


class StoreIOError(OSError):
    """The store could not make an event durable."""


@dataclass
class ReplayReport:
    truncated: bool = False
    dropped_lines: int = 0
    detail: str = ""


@dataclass
class StoreState:
    """Materialized view over the event log."""

    dags: dict[str, DagSpec] = field(default_factory=dict)  # latest version per dag_id
    dag_specs: dict[tuple[str, int], DagSpec] = field(default_factory=dict)
    runs: dict[str, RunRecord] = field(default_factory=dict)


_REQUIRED_KEYS: dict[EventKind, tuple[str, ...]] = {
    EventKind.DAG_REGISTERED: ("dag_id", "version", "dagfile"),
    EventKind.RUN_CREATED: ("run_id", "dag_id", "version", "config_text", "executor"),
    EventKind.TASK_STATE_CHANGED: ("run_id", "task_id", "from", "to", "attempt"),
    EventKind.RUN_STATE_CHANGED: ("run_id", "from", "to"),
    EventKind.LOG_APPENDED: ("run_id", "task_id", "nbytes"),
}


def validate_payload(kind: EventKind, payload: dict[str, Any]) -> None:
    """Shape check plus task-transition legality; raises StoreError."""
    missing = [k for k in _REQUIRED_KEYS[kind] if k not in payload]
    if missing:
        raise StoreError(f"{kind.value} payload missing keys {missing}")
    if kind is EventKind.TASK_STATE_CHANGED:
        try:
            before = TaskState(payload["from"])
            after = TaskState(payload["to"])
        except ValueError as exc:
            raise StoreError(f"unknown task state in payload: {exc}") from exc
        if not is_legal_task_transition(before, after):
            raise StoreError(f"illegal task transition {before.value} -> {after.value}")
    if kind is EventKind.RUN_STATE_CHANGED:
        try:
            RunState(payload["from"])
            RunState(payload["to"])
        except ValueError as exc:
            raise StoreError(f"unknown run state in payload: {exc}") from exc


class MetadataStore:
    """Append-only event store with snapshots and per-run log side files."""

    def __init__(
        self,
        data_dir: str | Path,
        *,
        snapshot_interval: int = SNAPSHOT_INTERVAL_DEFAULT,
        fsync: bool = True,
    ) -> None:
        self.data_dir = Path(data_dir)
        self.snapshot_interval = snapshot_interval
        self._fsync = fsync
        self._lock = threading.RLock()
        self._state = StoreState()
        self._last_seq = 0
        self.replay_report = ReplayReport()

        self.data_dir.mkdir(parents=True, exist_ok=True)
        (self.data_dir / "snapshots").mkdir(exist_ok=True)
        (self.data_dir / "runs").mkdir(exist_ok=True)
        self._recover()
        self._log_file = open(self._events_path, "a", encoding="utf-8")

    # -- paths ---------------------------------------------------------------

    @property
    def _events_path(self) -> Path:
        return self.data_dir / "events.log"

    def task_log_path(self, run_id: str, task_id: str) -> Path:
        return self.data_dir / "runs" / run_id / "logs" / f"{task_id}.txt"

    @staticmethod
    def task_log_ref(run_id: str, task_id: str) -> str:
        return f"runs/{run_id}/logs/{task_id}.txt"

    # -- appending -----------------------------------------------------------

    def append(self, kind: EventKind, payload: dict[str, Any]) -> StoreEvent:
        """Validate, persist durably, apply to the materialized view.

        The store assigns the sequence number and the (UTC) timestamp: one
        clock source for every record. Raises StoreError for bad payloads and
        StoreIOError when durability cannot be guaranteed.
        """
        validate_payload(kind, payload)
        with self._lock:
            event = StoreEvent(seq=self._last_seq + 1, at=utc_now(), kind=kind, payload=payload)
            # apply first against a throwaway error: reducer errors must not
            # leave a persisted event the view cannot absorb
            _apply_event(self._state, event)
            try:
                self._log_file.write(event.to_line() + "\n")
                self._log_file.flush()
                if self._fsync:
                    os.fsync(self._log_file.fileno())
            except OSError as exc:
                raise StoreIOError(f"cannot persist event: {exc}") from exc
            self._last_seq = event.seq
            if self.snapshot_interval > 0 and event.seq % self.snapshot_interval == 0:
                self._write_snapshot(event.seq)
            return event

    # -- reading -------------------------------------------------------------

    @property
    def last_seq(self) -> int:
        with self._lock:
            return self._last_seq

    def events(self) -> Iterator[StoreEvent]:
        """All persisted events, oldest first (reads the log file)."""
        if not self._events_path.exists():
            return
        with open(self._events_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield _event_from_line(line)

    def state(self) -> StoreState:
        return self._state

    def get_dag(self, dag_id: str, version: int | None = None) -> DagSpec | None:
        with self._lock:
            if version is None:
                return self._state.dags.get(dag_id)
            return self._state.dag_specs.get((dag_id, version))

    def get_run(self, run_id: str) -> RunRecord | None:
        with self._lock:
            record = self._state.runs.get(run_id)
            return record.copy() if record else None

    def query_runs(
        self,
        *,
        dag_id: str | None = None,
        state: RunState | None = None,
        since: datetime | None = None,
    ) -> list[RunSummary]:
        """Run summaries matching every given filter, newest first."""
        with self._lock:
            records = [
                r
                for r in self._state.runs.values()
                if (dag_id is None or r.dag_id == dag_id)
                and (state is None or r.state is state)
                and (since is None or r.created_at >= since)
            ]
        records.sort(key=lambda r: (r.created_at, r.run_id), reverse=True)
        return [RunSummary.of(r) for r in records]

    # -- task logs -----------------------------------------------------------

    def append_task_log(self, run_id: str, task_id: str, text: str) -> int:
        """Append UTF-8 text to the task's side file; returns the new size in bytes."""
        path = self.task_log_path(run_id, task_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        with open(path, "ab") as fh:
            fh.write(data)
            fh.flush()
            if self._fsync:
                os.fsync(fh.fileno())
            size = fh.tell()
        self.append(
            EventKind.LOG_APPENDED,
            {"run_id": run_id, "task_id": task_id, "nbytes": len(data)},
        )
        return size

    def read_task_log(self, run_id: str, task_id: str, offset: int = 0, max_bytes: int = 65536) -> tuple[str, int]:
        """Chunked log read for polling: returns (text, next_offset)."""
        path = self.task_log_path(run_id, task_id)
        if not path.exists():
            return "", 0
        size = path.stat().st_size
        offset = max(0, min(offset, size))
        with open(path, "rb") as fh:
            fh.seek(offset)
            chunk = fh.read(max_bytes)
        return chunk.decode("utf-8", errors="replace"), offset + len(chunk)

    # -- recovery ------------------------------------------------------------

    def _recover(self) -> None:
        events_path = self._events_path
        if not events_path.exists():
            events_path.touch()
            return

        valid: list[StoreEvent] = []
        dropped = 0
        truncate_at: int | None = None
        offset = 0
        expected_seq = 1
        with open(events_path, "rb") as fh:
            for raw in fh:
                line = raw.decode("utf-8", errors="replace").strip()
                if line:
                    try:
                        event = _event_from_line(line)
                        if event.seq != expected_seq:
                            raise StoreError(
                                f"sequence gap: expected {expected_seq}, got {event.seq}"
                            )
                        validate_payload(event.kind, event.payload)
                    except (StoreError, ValueError, KeyError, json.JSONDecodeError):
                        truncate_at = offset
                        break
                    valid.append(event)
                    expected_seq = event.seq + 1
                offset += len(raw)

        if truncate_at is not None:
            with open(events_path, "rb") as fh:
                fh.seek(truncate_at)
                dropped = sum(1 for ln in fh if ln.strip())
            with open(events_path, "r+b") as fh:
                fh.truncate(truncate_at)
            self.replay_report = ReplayReport(
                truncated=True,
                dropped_lines=dropped,
                detail=f"event log truncated to seq {len(valid)}; dropped {dropped} invalid line(s)",
            )

        last_seq = valid[-1].seq if valid else 0
        state, applied_from = self._load_best_snapshot(last_seq)
        for event in valid:
            if event.seq > applied_from:
                _apply_event(state, event)

        _reset_running_tasks(state)
        self._state = state
        self._last_seq = last_seq

    def _load_best_snapshot(self, last_seq: int) -> tuple[StoreState, int]:
        snap_dir = self.data_dir / "snapshots"
        candidates = sorted(
            (p for p in snap_dir.glob("*.snap") if p.stem.isdigit() and int(p.stem) <= last_seq),
            key=lambda p: int(p.stem),
            reverse=True,
        )
        for path in candidates:
            try:
                payload = json.loads(path.read_text(encoding="utf-8"))
                return _state_from_payload(payload), int(payload["seq"])
            except (ValueError, KeyError, OSError):
                continue  # fall back to an older snapshot or a full replay
        return StoreState(), 0

    def _write_snapshot(self, seq: int) -> None:
        path = self.data_dir / "snapshots" / f"{seq:012d}.snap"
        tmp = path.with_suffix(".tmp")
        payload = _state_to_payload(self._state, seq)
        tmp.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
        os.replace(tmp, path)

    def close(self) -> None:
        with self._lock:
            if not self._log_file.closed:
                self._log_file.close()

    def __enter__(self) -> "MetadataStore":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def replay(data_dir: str | Path) -> StoreState:
    """Reconstruct {dags, runs} from a store directory without holding it open.

    Deterministic: two replays of the same directory yield equal states.
    """
    store = MetadataStore(data_dir, fsync=False)
    try:
        return store.state()
    finally:
        store.close()


# -- reducer -----------------------------------------------------------------


def _apply_event(state: StoreState, event: StoreEvent) -> None:
    payload = event.payload
    if event.kind is EventKind.DAG_REGISTERED:
        spec = parse_dagfile(payload["dagfile"])
        state.dag_specs[(spec.dag_id, spec.version)] = spec
        latest = state.dags.get(spec.dag_id)
        if latest is None or spec.version >= latest.version:
            state.dags[spec.dag_id] = spec
        return

    if event.kind is EventKind.RUN_CREATED:
        key = (payload["dag_id"], int(payload["version"]))
        spec = state.dag_specs.get(key)
        if spec is None:
            raise StoreError(f"run references unregistered dag {key}")
        run_id = payload["run_id"]
        state.runs[run_id] = RunRecord(
            run_id=run_id,
            dag_id=spec.dag_id,
            version=spec.version,
            config_text=payload["config_text"],
            state=RunState.RUNNING,
            task_instances={
                t.task_id: TaskInstance(
                    task_id=t.task_id,
                    log_ref=MetadataStore.task_log_ref(run_id, t.task_id),
                )
                for t in spec.tasks
            },
            created_at=event.at,
            executor=ExecutorKind.from_payload(payload["executor"]),
        )
        return

    if event.kind is EventKind.TASK_STATE_CHANGED:
        run = _run_of(state, payload["run_id"])
        inst = run.task_instances.get(payload["task_id"])
        if inst is None:
            raise StoreError(f"unknown task {payload['task_id']!r} in run {run.run_id}")
        after = TaskState(payload["to"])
        inst.state = after
        inst.attempt = int(payload["attempt"])
        if after is TaskState.RUNNING:
            inst.started_at = event.at
            inst.ended_at = None
        elif after is TaskState.QUEUED:
            inst.started_at = None
            inst.ended_at = None
        else:
            inst.ended_at = event.at
        return

    if event.kind is EventKind.RUN_STATE_CHANGED:
        run = _run_of(state, payload["run_id"])
        run.state = RunState(payload["to"])
        if "workspace_retained" in payload:
            run.workspace_retained = payload["workspace_retained"]
        return

    if event.kind is EventKind.LOG_APPENDED:
        _run_of(state, payload["run_id"])  # existence check only; bodies live in side files
        return


def _run_of(state: StoreState, run_id: str) -> RunRecord:
    run = state.runs.get(run_id)
    if run is None:
        raise StoreError(f"unknown run {run_id!r}")
    return run


def _reset_running_tasks(state: StoreState) -> None:
    # A task that was mid-flight when the process died restarts from QUEUED;
    # its attempt counter survives so retry accounting stays truthful.
    for run in state.runs.values():
        if run.state in (RunState.SUCCESS, RunState.FAILED):
            continue
        for inst in run.task_instances.values():
            if inst.state is TaskState.RUNNING:
                inst.state = TaskState.QUEUED
                inst.started_at = None
                inst.ended_at = None


def _event_from_line(line: str) -> StoreEvent:
    doc = json.loads(line)
    return StoreEvent(
        seq=int(doc["seq"]),
        at=datetime.fromisoformat(doc["at"]),
        kind=EventKind(doc["kind"]),
        payload=doc["payload"],
    )


def _state_to_payload(state: StoreState, seq: int) -> dict[str, Any]:
    return {
        "seq": seq,
        "dag_specs": [
            {"dag_id": dag_id, "version": version, "dagfile": serialize_dagfile(spec)}
            for (dag_id, version), spec in sorted(state.dag_specs.items())
        ],
        "runs": {run_id: run.to_payload() for run_id, run in sorted(state.runs.items())},
    }


def _state_from_payload(payload: dict[str, Any]) -> StoreState:
    state = StoreState()
    for entry in payload["dag_specs"]:
        spec = parse_dagfile(entry["dagfile"])
        state.dag_specs[(spec.dag_id, spec.version)] = spec
        latest = state.dags.get(spec.dag_id)
        if latest is None or spec.version >= latest.version:
            state.dags[spec.dag_id] = spec
    for run_id, run_payload in payload["runs"].items():
        state.runs[run_id] = RunRecord.from_payload(run_payload)
    return state


ReducerFn = Callable[[StoreState, StoreEvent], None]
