"""surveyflow: a portable workflow gateway for drone-survey post-processing.

Orchestrates two pipelines — photogrammetric reconstruction and
segmentation-mask ETL — as directed acyclic graphs of retriable tasks with
event-sourced run state, executor choice, a REST control plane, and
deterministic synthetic backends so everything runs and verifies end to end
without proprietary tooling.
"""

from .config import RunConfig, Variant, config_to_dag, parse_config, serialize_config
from .dag import (
    DagSpec,
    DagValidationError,
    ResourceHint,
    RetryPolicy,
    TaskSpec,
    ValidationCode,
    ValidationReport,
    ready_tasks,
    topological_order,
    validate_dag,
)
from .dagfile import parse_dagfile, serialize_dagfile
from .engine import (
    CompletionReport,
    Engine,
    ExecutorUnavailableError,
    LocalProcessDispatcher,
    StateConflictError,
    TaskDispatchPayload,
    default_local_executor,
    register_external_executor,
)
from .records import ExecutorKind, RunRecord, RunSummary, TaskInstance
from .states import RunState, TaskState
from .store import EventKind, MetadataStore, StoreEvent, replay

__version__ = "0.1.0"

__all__ = [
    "CompletionReport",
    "DagSpec",
    "DagValidationError",
    "Engine",
    "EventKind",
    "ExecutorKind",
    "ExecutorUnavailableError",
    "LocalProcessDispatcher",
    "MetadataStore",
    "ResourceHint",
    "RetryPolicy",
    "RunConfig",
    "RunRecord",
    "RunState",
    "RunSummary",
    "StateConflictError",
    "StoreEvent",
    "TaskDispatchPayload",
    "TaskInstance",
    "TaskSpec",
    "TaskState",
    "ValidationCode",
    "ValidationReport",
    "Variant",
    "config_to_dag",
    "default_local_executor",
    "parse_config",
    "parse_dagfile",
    "ready_tasks",
    "register_external_executor",
    "replay",
    "serialize_config",
    "serialize_dagfile",
    "topological_order",
    "validate_dag",
]
