"""Drives workflow runs to completion: dispatch, retries, pause, propagation.

One coordinating context per run owns every state mutation; task bodies run
in worker threads (or behind an external dispatcher) and report back. All
state changes flow through the metadata store as events, so the record served
to callers is always reconstructible from disk.

Execution semantics:

* A task is dispatchable when QUEUED with every upstream SUCCESS or SKIPPED
  (a variant-skipped task satisfies its dependents).
* On failure, a task re-queues while its start count is within the retry
  budget (attempt <= max_retries at failure time), after a fixed
  backoff_seconds delay. Once exhausted, every transitively downstream QUEUED
  task flips to UPSTREAM_FAILED immediately; independent branches keep going.
* SEQUENTIAL starts tasks exactly in topological order. LOCAL_PARALLEL runs a
  slot pool: a task occupies min(resource_hint.cpus, worker_count) slots.
  EXTERNAL hands payloads to a registered dispatcher, one at a time,
  dispatching each attempt at most once.
* Pause stops new dispatch; in-flight tasks finish and record their states.
  Resume re-reads everything from the persisted record.
"""

from __future__ import annotations

import json
import os
import threading
import time
import traceback
import uuid
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol

from .config import ConfigError, RunConfig, parse_config, serialize_config, skip_reason
from .dag import DagSpec, DagValidationError, TaskSpec, downstream_closure, topological_order, validate_dag
from .records import ExecutorKind, RunRecord, RunSummary
from .runner import TaskContext, TaskFailure, get_task_kind
from .states import RunState, TaskState
from .store import EventKind, MetadataStore, StoreIOError


class EngineError(RuntimeError):
    pass


class UnknownRunError(EngineError):
    pass


class UnknownDagError(EngineError):
    pass


class StateConflictError(EngineError):
    """Operation not legal for the run/task's current state."""


class ExecutorUnavailableError(EngineError):
    pass


# -- external executor contract ---------------------------------------------------


@dataclass(frozen=True)
class TaskDispatchPayload:
    run_id: str
    task_id: str
    kind: str
    params: Mapping[str, str]
    upstream: tuple[str, ...]
    attempt: int
    workdir: str
    output_dir: str
    config_text: str


@dataclass(frozen=True)
class CompletionReport:
    exit_status: int
    log_text: str = ""


class ExternalDispatcher(Protocol):
    def dispatch(self, payload: TaskDispatchPayload) -> CompletionReport: ...


_EXTERNAL_DISPATCHERS: dict[str, ExternalDispatcher] = {}
_registry_lock = threading.Lock()


@dataclass(frozen=True)
class ExecutorRegistration:
    adapter_name: str

    def unregister(self) -> None:
        with _registry_lock:
            _EXTERNAL_DISPATCHERS.pop(self.adapter_name, None)


def register_external_executor(adapter_name: str, dispatcher: ExternalDispatcher) -> ExecutorRegistration:
    """Make EXTERNAL(adapter_name) selectable. Names are claimed once."""
    with _registry_lock:
        if adapter_name in _EXTERNAL_DISPATCHERS:
            raise ValueError(f"external executor {adapter_name!r} already registered")
        _EXTERNAL_DISPATCHERS[adapter_name] = dispatcher
    return ExecutorRegistration(adapter_name)


def get_external_dispatcher(adapter_name: str) -> ExternalDispatcher:
    with _registry_lock:
        dispatcher = _EXTERNAL_DISPATCHERS.get(adapter_name)
    if dispatcher is None:
        raise ExecutorUnavailableError(f"no external executor named {adapter_name!r}")
    return dispatcher


class LocalProcessDispatcher:
    """Reference dispatcher: runs the task body in-process, serially."""

    def dispatch(self, payload: TaskDispatchPayload) -> CompletionReport:
        lines: list[str] = []
        task = TaskSpec(
            task_id=payload.task_id,
            kind=payload.kind,
            params=dict(payload.params),
            upstream=payload.upstream,
        )
        ctx = TaskContext(
            run_id=payload.run_id,
            task=task,
            config=parse_config(payload.config_text),
            attempt=payload.attempt,
            workdir=Path(payload.workdir),
            output_dir=Path(payload.output_dir),
            log=lines.append,
        )
        error = _run_body(ctx)
        return CompletionReport(exit_status=0 if error is None else 1, log_text="".join(lines))


def default_local_executor(config: RunConfig) -> ExecutorKind:
    workers = min(os.cpu_count() or 1, config.resources.cpus)
    return ExecutorKind.local_parallel(max(1, workers))


# -- engine ------------------------------------------------------------------------


@dataclass
class _LiveRun:
    run_id: str
    spec: DagSpec
    config: RunConfig
    executor: ExecutorKind
    run_dir: Path
    pause_requested: threading.Event = field(default_factory=threading.Event)
    done: threading.Event = field(default_factory=threading.Event)
    not_before: dict[str, float] = field(default_factory=dict)
    thread: threading.Thread | None = None

    @property
    def workdir(self) -> Path:
        return self.run_dir / "work"


class Engine:
    """Owns run lifecycles over one metadata store."""

    def __init__(self, store: MetadataStore) -> None:
        self._store = store
        self._lock = threading.RLock()
        self._live: dict[str, _LiveRun] = {}
        self._normalize_recovered_runs()

    # -- registration and lookup ----------------------------------------------

    def register_dag(self, spec: DagSpec) -> tuple[str, int]:
        """Validate and persist a graph; returns (dag_id, assigned version)."""
        report = validate_dag(spec)
        if not report.ok:
            raise DagValidationError(report)
        from .dagfile import serialize_dagfile

        with self._lock:
            latest = self._store.get_dag(spec.dag_id)
            if latest is not None and latest.version >= spec.version:
                spec = DagSpec(dag_id=spec.dag_id, version=latest.version + 1, tasks=spec.tasks)
            self._store.append(
                EventKind.DAG_REGISTERED,
                {"dag_id": spec.dag_id, "version": spec.version, "dagfile": serialize_dagfile(spec)},
            )
        return spec.dag_id, spec.version

    def get_run(self, run_id: str) -> RunRecord:
        record = self._store.get_run(run_id)
        if record is None:
            raise UnknownRunError(f"no run {run_id!r}")
        return record

    def query_runs(self, **filters) -> list[RunSummary]:
        return self._store.query_runs(**filters)

    # -- run lifecycle -----------------------------------------------------------

    def execute_run(self, spec: DagSpec, config: RunConfig, executor: ExecutorKind) -> RunRecord:
        """Drive a run to completion (or pause) synchronously; returns the record."""
        with self._lock:
            if self._store.get_dag(spec.dag_id, spec.version) is None:
                self.register_dag(spec)
        run_id = self._create_run(spec.dag_id, spec.version, config, executor)
        live = self._live[run_id]
        self._drive(live)
        return self.get_run(run_id)

    def trigger_run(self, dag_id: str, config_text: str, executor: ExecutorKind | None = None) -> str:
        """Start a run of a registered graph asynchronously; returns run_id."""
        spec = self._store.get_dag(dag_id)
        if spec is None:
            raise UnknownDagError(f"no dag {dag_id!r}")
        config = parse_config(config_text)
        executor = executor or default_local_executor(config)
        run_id = self._create_run(dag_id, spec.version, config, executor, config_text=config_text)
        live = self._live[run_id]
        thread = threading.Thread(target=self._drive, args=(live,), daemon=True)
        live.thread = thread
        thread.start()
        return run_id

    def wait_run(self, run_id: str, timeout: float | None = None) -> RunRecord:
        with self._lock:
            live = self._live.get(run_id)
        if live is not None and not live.done.wait(timeout):
            raise TimeoutError(f"run {run_id} still active after {timeout}s")
        return self.get_run(run_id)

    def pause_run(self, run_id: str) -> RunRecord:
        """Stop dispatching; block until in-flight tasks drain. Run ends PAUSED."""
        with self._lock:
            record = self.get_run(run_id)
            if record.state is not RunState.RUNNING:
                raise StateConflictError(f"cannot pause a {record.state.value} run")
            live = self._live.get(run_id)
            if live is None:
                raise StateConflictError("run has no active driver to pause")
            live.pause_requested.set()
        live.done.wait()
        record = self.get_run(run_id)
        if record.state is not RunState.PAUSED:
            raise StateConflictError(f"run finished as {record.state.value} before pause engaged")
        return record

    def resume_run(self, run_id: str) -> RunRecord:
        """Continue a PAUSED run from its persisted state map (async driver)."""
        with self._lock:
            record = self.get_run(run_id)
            if record.state is not RunState.PAUSED:
                raise StateConflictError(f"cannot resume a {record.state.value} run")
            live = self._rebuild_live(record)
            self._append_run_state(run_id, RunState.PAUSED, RunState.RUNNING)
            thread = threading.Thread(target=self._drive, args=(live,), daemon=True)
            live.thread = thread
            thread.start()
        return self.get_run(run_id)

    def retry_task(self, run_id: str, task_id: str) -> RunRecord:
        """Re-queue a FAILED or UPSTREAM_FAILED task plus its downstream closure.

        The run must not be RUNNING. A FAILED run returns to PAUSED (its
        failed tasks are queued again, so the failed verdict no longer holds);
        resume it to continue.
        """
        with self._lock:
            record = self.get_run(run_id)
            if record.state is RunState.RUNNING:
                raise StateConflictError("cannot retry tasks of a RUNNING run")
            inst = record.task_instances.get(task_id)
            if inst is None:
                raise UnknownRunError(f"no task {task_id!r} in run {run_id}")
            if inst.state not in (TaskState.FAILED, TaskState.UPSTREAM_FAILED):
                raise StateConflictError(f"task {task_id} is {inst.state.value}, not retriable")

            spec = self._spec_for(record)
            self._append_task_state(run_id, task_id, inst.state, TaskState.QUEUED, inst.attempt)
            for downstream in sorted(downstream_closure(spec, task_id)):
                down_inst = record.task_instances[downstream]
                if down_inst.state in (TaskState.UPSTREAM_FAILED, TaskState.FAILED):
                    self._append_task_state(
                        run_id, downstream, down_inst.state, TaskState.QUEUED, down_inst.attempt
                    )
            if record.state is RunState.FAILED:
                self._append_run_state(run_id, RunState.FAILED, RunState.PAUSED)
        return self.get_run(run_id)

    # -- run creation ---------------------------------------------------------------

    def _create_run(
        self,
        dag_id: str,
        version: int,
        config: RunConfig,
        executor: ExecutorKind,
        config_text: str | None = None,
    ) -> str:
        spec = self._store.get_dag(dag_id, version)
        if spec is None:
            raise UnknownDagError(f"no dag {dag_id!r} version {version}")
        self._check_executor(executor)

        input_dir = Path(config.project.input_dir)
        if not input_dir.is_dir() or not os.access(input_dir, os.R_OK):
            raise ConfigError("input_dir does not exist or is unreadable", key="project.input_dir")

        run_id = uuid.uuid4().hex[:12]
        run_dir = Path(config.project.output_dir) / run_id
        try:
            (run_dir / "work").mkdir(parents=True, exist_ok=False)
        except OSError as exc:
            raise EngineError(f"workspace creation failed: {exc}") from exc

        with self._lock:
            self._store.append(
                EventKind.RUN_CREATED,
                {
                    "run_id": run_id,
                    "dag_id": dag_id,
                    "version": version,
                    "config_text": config_text if config_text is not None else serialize_config(config),
                    "executor": executor.to_payload(),
                },
            )
            for task in spec.tasks:
                reason = skip_reason(task, config)
                if reason is not None:
                    self._append_task_state(run_id, task.task_id, TaskState.QUEUED, TaskState.SKIPPED, 0)
            self._live[run_id] = _LiveRun(
                run_id=run_id, spec=spec, config=config, executor=executor, run_dir=run_dir
            )
        return run_id

    def _check_executor(self, executor: ExecutorKind) -> None:
        if executor.mode == "external":
            get_external_dispatcher(executor.adapter_name)  # raises if absent

    def _rebuild_live(self, record: RunRecord) -> _LiveRun:
        spec = self._spec_for(record)
        config = parse_config(record.config_text)
        self._check_executor(record.executor)
        live = _LiveRun(
            run_id=record.run_id,
            spec=spec,
            config=config,
            executor=record.executor,
            run_dir=Path(config.project.output_dir) / record.run_id,
        )
        self._live[record.run_id] = live
        return live

    def _spec_for(self, record: RunRecord) -> DagSpec:
        spec = self._store.get_dag(record.dag_id, record.version)
        if spec is None:
            raise UnknownDagError(f"dag {record.dag_id!r} v{record.version} missing from store")
        return spec

    def _normalize_recovered_runs(self) -> None:
        # A run left RUNNING by a dead process has no driver; park it as
        # PAUSED so it can be resumed explicitly.
        for summary in self._store.query_runs(state=RunState.RUNNING):
            self._append_run_state(summary.run_id, RunState.RUNNING, RunState.PAUSED, note="recovered")

    # -- drive loop -------------------------------------------------------------------

    def _drive(self, live: _LiveRun) -> None:
        try:
            self._sweep_lingering_failures(live)
            if live.executor.mode == "sequential":
                self._drive_sequential(live)
            else:
                workers = 1 if live.executor.mode == "external" else live.executor.worker_count
                self._drive_parallel(live, workers)
        except StoreIOError:
            # Durability lost: stop driving. Disk state is a consistent
            # prefix; reopening the store resumes from it.
            pass
        finally:
            live.done.set()
            with self._lock:
                self._live.pop(live.run_id, None)

    def _drive_sequential(self, live: _LiveRun) -> None:
        for task_id in topological_order(live.spec):
            if live.pause_requested.is_set():
                self._finalize_pause(live)
                return
            states = self._states(live.run_id)
            if states[task_id] is not TaskState.QUEUED or not self._upstream_satisfied(live.spec, task_id, states):
                continue
            while True:
                if live.pause_requested.is_set():
                    self._finalize_pause(live)
                    return
                outcome = self._start_and_run(live, task_id)
                if outcome == "success":
                    break
                if outcome == "requeued":
                    continue
                break  # exhausted: propagation already done
        if live.pause_requested.is_set() and self._has_pending(live):
            self._finalize_pause(live)
            return
        self._finalize_terminal(live)

    def _drive_parallel(self, live: _LiveRun, workers: int) -> None:
        futures: dict[Future, tuple[str, int]] = {}
        slots_used = 0
        with ThreadPoolExecutor(max_workers=workers) as pool:
            while True:
                done_futures = [f for f in futures if f.done()]
                for future in done_futures:
                    task_id, attempt = futures.pop(future)
                    slots_used -= self._slot_cost(live, task_id, workers)
                    self._complete(live, task_id, attempt, future.result())

                states = self._states(live.run_id)
                if live.pause_requested.is_set():
                    if futures:
                        wait(futures, return_when=FIRST_COMPLETED)
                        continue
                    self._finalize_pause(live)
                    return

                now = time.monotonic()
                inflight = {tid for tid, _ in futures.values()}
                dispatchable = [
                    tid
                    for tid in sorted(states)
                    if tid not in inflight
                    and states[tid] is TaskState.QUEUED
                    and self._upstream_satisfied(live.spec, tid, states)
                    and live.not_before.get(tid, 0.0) <= now
                ]
                for task_id in dispatchable:
                    cost = self._slot_cost(live, task_id, workers)
                    if slots_used + cost > workers:
                        continue
                    attempt = self._start_task(live, task_id)
                    futures[pool.submit(self._run_attempt, live, task_id, attempt)] = (task_id, attempt)
                    slots_used += cost

                if futures:
                    wait(futures, return_when=FIRST_COMPLETED, timeout=0.05)
                    continue

                states = self._states(live.run_id)
                queued = [tid for tid, s in states.items() if s is TaskState.QUEUED]
                if not queued:
                    self._finalize_terminal(live)
                    return
                delays = [live.not_before[tid] - time.monotonic() for tid in queued if tid in live.not_before]
                pending = [d for d in delays if d > 0]
                if pending:
                    time.sleep(min(min(pending), 0.25))
                    continue
                raise EngineError(
                    f"run {live.run_id}: tasks {queued} are queued but not dispatchable"
                )

    # -- task execution -----------------------------------------------------------------

    def _start_task(self, live: _LiveRun, task_id: str) -> int:
        record = self.get_run(live.run_id)
        attempt = record.task_instances[task_id].attempt + 1
        self._append_task_state(live.run_id, task_id, TaskState.QUEUED, TaskState.RUNNING, attempt)
        return attempt

    def _start_and_run(self, live: _LiveRun, task_id: str) -> str:
        """Sequential path: start, run inline, settle. Returns success|requeued|failed."""
        attempt = self._start_task(live, task_id)
        error = self._run_attempt(live, task_id, attempt)
        return self._complete(live, task_id, attempt, error, inline_backoff=True)

    def _run_attempt(self, live: _LiveRun, task_id: str, attempt: int) -> str | None:
        """Execute one attempt; returns an error message or None. Never raises."""
        task = live.spec.task(task_id)
        if live.executor.mode == "external":
            try:
                dispatcher = get_external_dispatcher(live.executor.adapter_name)
                report = dispatcher.dispatch(
                    TaskDispatchPayload(
                        run_id=live.run_id,
                        task_id=task_id,
                        kind=task.kind,
                        params=dict(task.params),
                        upstream=task.upstream,
                        attempt=attempt,
                        workdir=str(live.workdir),
                        output_dir=str(live.run_dir),
                        config_text=serialize_config(live.config),
                    )
                )
            except ExecutorUnavailableError as exc:
                return str(exc)
            except Exception as exc:  # noqa: BLE001 - dispatcher boundary
                return f"dispatch failed: {exc}"
            if report.log_text:
                self._store.append_task_log(live.run_id, task_id, report.log_text)
            return None if report.exit_status == 0 else f"exit status {report.exit_status}"

        ctx = TaskContext(
            run_id=live.run_id,
            task=task,
            config=live.config,
            attempt=attempt,
            workdir=live.workdir,
            output_dir=live.run_dir,
            log=lambda text: self._store.append_task_log(live.run_id, task_id, text),
        )
        return _run_body(ctx)

    def _complete(
        self, live: _LiveRun, task_id: str, attempt: int, error: str | None, *, inline_backoff: bool = False
    ) -> str:
        task = live.spec.task(task_id)
        if error is None:
            self._append_task_state(live.run_id, task_id, TaskState.RUNNING, TaskState.SUCCESS, attempt)
            return "success"

        self._store.append_task_log(live.run_id, task_id, f"[attempt {attempt}] failed: {error}\n")
        self._append_task_state(live.run_id, task_id, TaskState.RUNNING, TaskState.FAILED, attempt)
        if attempt <= task.retry_policy.max_retries:
            self._append_task_state(live.run_id, task_id, TaskState.FAILED, TaskState.QUEUED, attempt)
            backoff = task.retry_policy.backoff_seconds
            if inline_backoff:
                if backoff:
                    time.sleep(backoff)
            else:
                live.not_before[task_id] = time.monotonic() + backoff
            return "requeued"

        self._propagate_failure(live, task_id)
        return "failed"

    def _propagate_failure(self, live: _LiveRun, task_id: str) -> None:
        states = self._states(live.run_id)
        record = self.get_run(live.run_id)
        for downstream in sorted(downstream_closure(live.spec, task_id)):
            if states[downstream] is TaskState.QUEUED:
                self._append_task_state(
                    live.run_id,
                    downstream,
                    TaskState.QUEUED,
                    TaskState.UPSTREAM_FAILED,
                    record.task_instances[downstream].attempt,
                )

    def _sweep_lingering_failures(self, live: _LiveRun) -> None:
        """Settle state left by a crash or a manual retry before dispatching."""
        record = self.get_run(live.run_id)
        for task_id, inst in sorted(record.task_instances.items()):
            if inst.state is not TaskState.FAILED:
                continue
            task = live.spec.task(task_id)
            if inst.attempt <= task.retry_policy.max_retries:
                # crashed between FAILED and the requeue it had earned
                self._append_task_state(live.run_id, task_id, TaskState.FAILED, TaskState.QUEUED, inst.attempt)
            else:
                self._propagate_failure(live, task_id)

    # -- finalization ----------------------------------------------------------------------

    def _finalize_pause(self, live: _LiveRun) -> None:
        self._append_run_state(live.run_id, RunState.RUNNING, RunState.PAUSED)

    def _finalize_terminal(self, live: _LiveRun) -> None:
        states = self._states(live.run_id)
        failed = any(s in (TaskState.FAILED, TaskState.UPSTREAM_FAILED) for s in states.values())
        final = RunState.FAILED if failed else RunState.SUCCESS
        extra: dict[str, str] = {}
        if final is RunState.FAILED:
            marker = live.workdir / "ml_workspace.json"
            if marker.exists():
                root = json.loads(marker.read_text(encoding="utf-8")).get("root")
                if root and Path(root).exists():
                    extra["workspace_retained"] = root
        self._append_run_state(live.run_id, RunState.RUNNING, final, **extra)

    # -- store helpers ------------------------------------------------------------------------

    def _states(self, run_id: str) -> dict[str, TaskState]:
        return self.get_run(run_id).task_states()

    def _upstream_satisfied(self, spec: DagSpec, task_id: str, states: Mapping[str, TaskState]) -> bool:
        return all(
            states[dep] in (TaskState.SUCCESS, TaskState.SKIPPED) for dep in spec.task(task_id).upstream
        )

    def _has_pending(self, live: _LiveRun) -> bool:
        states = self._states(live.run_id)
        return any(s in (TaskState.QUEUED, TaskState.RUNNING) for s in states.values())

    def _append_task_state(self, run_id: str, task_id: str, before: TaskState, after: TaskState, attempt: int) -> None:
        self._store.append(
            EventKind.TASK_STATE_CHANGED,
            {"run_id": run_id, "task_id": task_id, "from": before.value, "to": after.value, "attempt": attempt},
        )

    def _append_run_state(self, run_id: str, before: RunState, after: RunState, **extra: str) -> None:
        payload = {"run_id": run_id, "from": before.value, "to": after.value}
        payload.update(extra)
        self._store.append(EventKind.RUN_STATE_CHANGED, payload)

    def _slot_cost(self, live: _LiveRun, task_id: str, workers: int) -> int:
        return min(live.spec.task(task_id).resource_hint.cpus, workers)


def _run_body(ctx: TaskContext) -> str | None:
    """Run a task body; map outcomes to an error string (None = success)."""
    try:
        body = get_task_kind(ctx.task.kind)
    except KeyError as exc:
        ctx.log(f"{exc}\n")
        return str(exc)
    try:
        body(ctx)
        return None
    except TaskFailure as exc:
        return str(exc)
    except Exception as exc:  # noqa: BLE001 - task bodies are a trust boundary
        ctx.log(traceback.format_exc())
        return f"unhandled {type(exc).__name__}: {exc}"
