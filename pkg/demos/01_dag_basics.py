"""
Workflow graphs: build, validate, order, serialize
==================================================

Tasks are nodes; upstream references are directed edges. The graph must be
acyclic, every reference must resolve, and ids must be unique — validation
reports every violation as data rather than raising.
"""

from surveyflow import (
    DagSpec,
    TaskSpec,
    parse_dagfile,
    ready_tasks,
    serialize_dagfile,
    topological_order,
    validate_dag,
)
from surveyflow.states import TaskState

# a diamond: ingest fans out to two independent stages that join in a report
diamond = DagSpec(
    dag_id="diamond-demo",
    version=1,
    tasks=(
        TaskSpec("ingest", "shell", params={"command": "echo ingest"}),
        TaskSpec("analyze_a", "shell", params={"command": "echo a"}, upstream=("ingest",)),
        TaskSpec("analyze_b", "shell", params={"command": "echo b"}, upstream=("ingest",)),
        TaskSpec("report", "shell", params={"command": "echo done"}, upstream=("analyze_a", "analyze_b")),
    ),
)

report = validate_dag(diamond)
print("valid:", report.ok)

# deterministic scheduling order: ties break by ascending task_id
print("topological order:", topological_order(diamond))

# which tasks could start right now, given a state map?
states = {
    "ingest": TaskState.SUCCESS,
    "analyze_a": TaskState.QUEUED,
    "analyze_b": TaskState.QUEUED,
    "report": TaskState.QUEUED,
}
print("ready now:", sorted(ready_tasks(diamond, states)))

# graphs serialize to a line-oriented text document and parse back identically
document = serialize_dagfile(diamond)
print("\n--- dagfile ---")
print(document)
assert parse_dagfile(document) == diamond

# broken graphs come back with every violation listed
broken = DagSpec(
    dag_id="broken",
    version=1,
    tasks=(
        TaskSpec("a", "shell", params={"command": "true"}, upstream=("b",)),
        TaskSpec("b", "shell", params={"command": "true"}, upstream=("a",)),
        TaskSpec("c", "shell", params={"command": "true"}, upstream=("ghost",)),
    ),
)
for issue in validate_dag(broken).errors:
    print(f"violation {issue.code.value}: {issue.detail}")
