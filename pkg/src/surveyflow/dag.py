"""Workflow graph model: task specs, structural validation, scheduling order.

Tasks are nodes; each ``upstream`` entry is a directed edge that must finish
before the task may start. All functions here are pure and operate on
immutable values, so they are safe to call from any number of threads.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .states import TaskState


@dataclass(frozen=True)
class RetryPolicy:
    """How often a failing task is re-queued and how long to wait in between."""

    max_retries: int = 0
    backoff_seconds: float = 0.0

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        if self.backoff_seconds < 0:
            raise ValueError("backoff_seconds must be non-negative")


@dataclass(frozen=True)
class ResourceHint:
    """Advisory sizing for a task; the local executor uses cpus for slot accounting."""

    cpus: int = 1
    memory_mb: int = 256
    gpus: int = 0

    def __post_init__(self) -> None:
        if self.cpus < 1:
            raise ValueError("cpus must be positive")
        if self.memory_mb < 1:
            raise ValueError("memory_mb must be positive")
        if self.gpus < 0:
            raise ValueError("gpus must be non-negative")


@dataclass(frozen=True)
class TaskSpec:
    """One node of a workflow graph.

    ``kind`` names the registered task body (a pipeline operation, ``shell``,
    or any kind added through the runner registry); ``params`` is a flat
    string map passed to the body verbatim.
    """

    task_id: str
    kind: str
    params: Mapping[str, str] = field(default_factory=dict)
    upstream: tuple[str, ...] = ()
    retry_policy: RetryPolicy = RetryPolicy()
    resource_hint: ResourceHint = ResourceHint()

    def __post_init__(self) -> None:
        if not self.task_id:
            raise ValueError("task_id must be non-empty")
        if not self.kind:
            raise ValueError("kind must be non-empty")
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "upstream", tuple(self.upstream))


@dataclass(frozen=True)
class DagSpec:
    """A named, versioned workflow graph."""

    dag_id: str
    version: int
    tasks: tuple[TaskSpec, ...]

    def __post_init__(self) -> None:
        if not self.dag_id:
            raise ValueError("dag_id must be non-empty")
        if self.version < 1:
            raise ValueError("version must be a positive integer")
        object.__setattr__(self, "tasks", tuple(self.tasks))

    def task_ids(self) -> list[str]:
        return [t.task_id for t in self.tasks]

    def task(self, task_id: str) -> TaskSpec:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        raise KeyError(task_id)


class ValidationCode(str, Enum):
    CYCLE = "CYCLE"
    DUPLICATE_ID = "DUPLICATE_ID"
    DANGLING_REF = "DANGLING_REF"
    EMPTY_DAG = "EMPTY_DAG"


@dataclass(frozen=True)
class ValidationIssue:
    code: ValidationCode
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    errors: tuple[ValidationIssue, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "errors", tuple(self.errors))
        if self.ok != (len(self.errors) == 0):
            raise ValueError("ok must be true exactly when errors is empty")


class DagValidationError(ValueError):
    """Raised when an operation that requires a valid graph receives a broken one."""

    def __init__(self, report: ValidationReport) -> None:
        details = "; ".join(f"{e.code.value}: {e.detail}" for e in report.errors)
        super().__init__(f"invalid dag: {details}")
        self.report = report


def validate_dag(spec: DagSpec) -> ValidationReport:
    """Check a graph for structural violations.

    Every violation is reported, not just the first: an empty graph, duplicate
    task ids, upstream references to absent tasks, and dependency cycles (each
    reported cycle names the tasks on it). Violations are data, not
    exceptions.
    """
    errors: list[ValidationIssue] = []

    if not spec.tasks:
        errors.append(ValidationIssue(ValidationCode.EMPTY_DAG, "dag has no tasks"))
        return ValidationReport(ok=False, errors=tuple(errors))

    seen: set[str] = set()
    for task in spec.tasks:
        if task.task_id in seen:
            errors.append(
                ValidationIssue(ValidationCode.DUPLICATE_ID, f"duplicate task_id {task.task_id!r}")
            )
        seen.add(task.task_id)

    known = {t.task_id for t in spec.tasks}
    for task in spec.tasks:
        for ref in task.upstream:
            if ref not in known:
                errors.append(
                    ValidationIssue(
                        ValidationCode.DANGLING_REF,
                        f"task {task.task_id!r} references absent upstream {ref!r}",
                    )
                )

    for cycle in _find_cycles(spec):
        errors.append(
            ValidationIssue(ValidationCode.CYCLE, "cycle: " + " -> ".join(cycle + (cycle[0],)))
        )

    return ValidationReport(ok=not errors, errors=tuple(errors))


def _find_cycles(spec: DagSpec) -> list[tuple[str, ...]]:
    """Depth-first search over resolvable edges; one reported cycle per back-edge family."""
    known = {t.task_id for t in spec.tasks}
    upstream: dict[str, list[str]] = {}
    for task in spec.tasks:
        # duplicates collapse to the first occurrence; their edges still count
        upstream.setdefault(task.task_id, [])
        upstream[task.task_id].extend(ref for ref in task.upstream if ref in known)

    white, gray, black = 0, 1, 2
    color = {tid: white for tid in upstream}
    cycles: list[tuple[str, ...]] = []

    def visit(tid: str, path: list[str]) -> None:
        if color[tid] == gray:
            idx = path.index(tid)
            cycles.append(tuple(path[idx:]))
            return
        if color[tid] == black:
            return
        color[tid] = gray
        path.append(tid)
        for dep in upstream[tid]:
            visit(dep, path)
        path.pop()
        color[tid] = black

    for tid in sorted(upstream):
        if color[tid] == white:
            visit(tid, [])
    return cycles


def topological_order(spec: DagSpec) -> list[str]:
    """Scheduling order: upstreams first, ties broken by ascending task_id.

    The tie-break makes sequential execution reproducible; the returned order
    is the lexicographically smallest topological order of the graph. Raises
    :class:`DagValidationError` for structurally invalid graphs.
    """
    report = validate_dag(spec)
    if not report.ok:
        raise DagValidationError(report)

    downstream: dict[str, list[str]] = {t.task_id: [] for t in spec.tasks}
    indegree = {t.task_id: 0 for t in spec.tasks}
    for task in spec.tasks:
        for dep in task.upstream:
            downstream[dep].append(task.task_id)
            indegree[task.task_id] += 1

    ready = [tid for tid, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        tid = heapq.heappop(ready)
        order.append(tid)
        for child in downstream[tid]:
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(ready, child)
    return order


def ready_tasks(spec: DagSpec, states: Mapping[str, TaskState]) -> set[str]:
    """Tasks that may start now: QUEUED with every upstream in SUCCESS.

    ``states`` must cover exactly the tasks of the graph; unknown or missing
    ids are contract violations and raise ValueError.
    """
    known = {t.task_id for t in spec.tasks}
    unknown = set(states) - known
    if unknown:
        raise ValueError(f"states contains unknown task ids: {sorted(unknown)}")
    missing = known - set(states)
    if missing:
        raise ValueError(f"states does not cover tasks: {sorted(missing)}")

    return {
        task.task_id
        for task in spec.tasks
        if states[task.task_id] is TaskState.QUEUED
        and all(states[dep] is TaskState.SUCCESS for dep in task.upstream)
    }


def downstream_closure(spec: DagSpec, task_id: str) -> set[str]:
    """All tasks that transitively depend on ``task_id`` (excluding itself)."""
    children: dict[str, set[str]] = {t.task_id: set() for t in spec.tasks}
    for task in spec.tasks:
        for dep in task.upstream:
            if dep in children:
                children[dep].add(task.task_id)
    if task_id not in children:
        raise KeyError(task_id)

    closure: set[str] = set()
    frontier: Iterable[str] = children[task_id]
    while frontier:
        fresh = {tid for tid in frontier if tid not in closure}
        closure.update(fresh)
        frontier = {c for tid in fresh for c in children[tid]}
    return closure
