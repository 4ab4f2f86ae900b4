"""Task and run state machines shared by the scheduler, engine, and store."""

from __future__ import annotations

from enum import Enum


class TaskState(str, Enum):
    QUEUED = "QUEUED"
    RUNNING = "RUNNING"
    SUCCESS = "SUCCESS"
    FAILED = "FAILED"
    UPSTREAM_FAILED = "UPSTREAM_FAILED"
    SKIPPED = "SKIPPED"


class RunState(str, Enum):
    RUNNING = "RUNNING"
    PAUSED = "PAUSED"
    SUCCESS = "SUCCESS"
    FAILED = "FAILED"


# FAILED -> QUEUED is the automatic-retry path (engine enforces the retry
# budget); UPSTREAM_FAILED -> QUEUED is the manual-retry reset of downstream
# tasks. SUCCESS and SKIPPED never leave their state.
LEGAL_TASK_TRANSITIONS: frozenset[tuple[TaskState, TaskState]] = frozenset(
    {
        (TaskState.QUEUED, TaskState.RUNNING),
        (TaskState.RUNNING, TaskState.SUCCESS),
        (TaskState.RUNNING, TaskState.FAILED),
        (TaskState.FAILED, TaskState.QUEUED),
        (TaskState.QUEUED, TaskState.UPSTREAM_FAILED),
        (TaskState.QUEUED, TaskState.SKIPPED),
        (TaskState.UPSTREAM_FAILED, TaskState.QUEUED),
    }
)

TERMINAL_TASK_STATES: frozenset[TaskState] = frozenset(
    {TaskState.SUCCESS, TaskState.FAILED, TaskState.UPSTREAM_FAILED, TaskState.SKIPPED}
)

TERMINAL_RUN_STATES: frozenset[RunState] = frozenset({RunState.SUCCESS, RunState.FAILED})


def is_legal_task_transition(before: TaskState, after: TaskState) -> bool:
    return (before, after) in LEGAL_TASK_TRANSITIONS


class IllegalTransitionError(ValueError):
    """A task-state change outside the legal transition set."""

    def __init__(self, before: TaskState, after: TaskState) -> None:
        super().__init__(f"illegal task transition {before.value} -> {after.value}")
        self.before = before
        self.after = after
