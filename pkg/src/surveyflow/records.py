"""Run and task execution records, plus executor selection.

These are the values the engine mutates, the store persists, and the API
serves. ``to_payload``/``from_payload`` define the stable JSON shapes used in
the event log, snapshots, and HTTP bodies.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any

from .states import RunState, TaskState


@dataclass(frozen=True)
class ExecutorKind:
    """How task bodies get executed for one run."""

    mode: str  # "sequential" | "local_parallel" | "external"
    worker_count: int = 1
    adapter_name: str = ""

    def __post_init__(self) -> None:
        if self.mode not in ("sequential", "local_parallel", "external"):
            raise ValueError(f"unknown executor mode {self.mode!r}")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.mode == "external" and not self.adapter_name:
            raise ValueError("external executor needs an adapter name")

    @classmethod
    def sequential(cls) -> "ExecutorKind":
        return cls(mode="sequential")

    @classmethod
    def local_parallel(cls, worker_count: int) -> "ExecutorKind":
        return cls(mode="local_parallel", worker_count=worker_count)

    @classmethod
    def external(cls, adapter_name: str) -> "ExecutorKind":
        return cls(mode="external", adapter_name=adapter_name)

    def to_payload(self) -> dict[str, Any]:
        return {"mode": self.mode, "worker_count": self.worker_count, "adapter_name": self.adapter_name}

    @classmethod
    def from_payload(cls, payload: dict[str, Any]) -> "ExecutorKind":
        return cls(
            mode=payload["mode"],
            worker_count=int(payload.get("worker_count", 1)),
            adapter_name=payload.get("adapter_name", ""),
        )


@dataclass
class TaskInstance:
    """One task's execution state within a run."""

    task_id: str
    state: TaskState = TaskState.QUEUED
    attempt: int = 0  # number of times started
    started_at: datetime | None = None
    ended_at: datetime | None = None
    log_ref: str = ""

    def to_payload(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "state": self.state.value,
            "attempt": self.attempt,
            "started_at": _iso(self.started_at),
            "ended_at": _iso(self.ended_at),
            "log_ref": self.log_ref,
        }

    @classmethod
    def from_payload(cls, payload: dict[str, Any]) -> "TaskInstance":
        return cls(
            task_id=payload["task_id"],
            state=TaskState(payload["state"]),
            attempt=int(payload["attempt"]),
            started_at=_parse_iso(payload.get("started_at")),
            ended_at=_parse_iso(payload.get("ended_at")),
            log_ref=payload.get("log_ref", ""),
        )


@dataclass
class RunRecord:
    """Full state of one workflow run."""

    run_id: str
    dag_id: str
    version: int
    config_text: str  # config snapshot, exactly as triggered
    state: RunState
    task_instances: dict[str, TaskInstance]
    created_at: datetime
    executor: ExecutorKind
    workspace_retained: str | None = None

    def task_states(self) -> dict[str, TaskState]:
        return {tid: inst.state for tid, inst in self.task_instances.items()}

    def copy(self) -> "RunRecord":
        return replace(
            self,
            task_instances={tid: replace(inst) for tid, inst in self.task_instances.items()},
        )

    def to_payload(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "dag_id": self.dag_id,
            "version": self.version,
            "config_text": self.config_text,
            "state": self.state.value,
            "task_instances": {tid: inst.to_payload() for tid, inst in sorted(self.task_instances.items())},
            "created_at": _iso(self.created_at),
            "executor": self.executor.to_payload(),
            "workspace_retained": self.workspace_retained,
        }

    @classmethod
    def from_payload(cls, payload: dict[str, Any]) -> "RunRecord":
        return cls(
            run_id=payload["run_id"],
            dag_id=payload["dag_id"],
            version=int(payload["version"]),
            config_text=payload["config_text"],
            state=RunState(payload["state"]),
            task_instances={
                tid: TaskInstance.from_payload(p) for tid, p in payload["task_instances"].items()
            },
            created_at=_parse_iso(payload["created_at"]),  # type: ignore[arg-type]
            executor=ExecutorKind.from_payload(payload["executor"]),
            workspace_retained=payload.get("workspace_retained"),
        )


@dataclass(frozen=True)
class RunSummary:
    """Listing view of a run: states and counters, no log bodies."""

    run_id: str
    dag_id: str
    version: int
    state: RunState
    created_at: datetime
    task_counts: dict[str, int] = field(default_factory=dict)

    @classmethod
    def of(cls, record: RunRecord) -> "RunSummary":
        counts: dict[str, int] = {}
        for inst in record.task_instances.values():
            counts[inst.state.value] = counts.get(inst.state.value, 0) + 1
        return cls(
            run_id=record.run_id,
            dag_id=record.dag_id,
            version=record.version,
            state=record.state,
            created_at=record.created_at,
            task_counts=counts,
        )

    def to_payload(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "dag_id": self.dag_id,
            "version": self.version,
            "state": self.state.value,
            "created_at": _iso(self.created_at),
            "task_counts": dict(sorted(self.task_counts.items())),
        }


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def _iso(value: datetime | None) -> str | None:
    return value.isoformat() if value is not None else None


def _parse_iso(value: str | None) -> datetime | None:
    return datetime.fromisoformat(value) if value else None
