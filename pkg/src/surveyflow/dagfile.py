"""Line-oriented text format for workflow graphs.

One document describes one graph. The grammar (also in docs/dagfile_format.md):

    # comment lines start with '#'
    dag_id = <identifier>
    version = <positive integer>

    task <task_id>
      kind = <kind name>
      upstream = <comma-separated task ids>     # optional, default none
      retries = <non-negative int>              # optional, default 0
      backoff_seconds = <non-negative number>   # optional, default 0
      cpus = <positive int>                     # optional, default 1
      memory_mb = <positive int>                # optional, default 256
      gpus = <non-negative int>                 # optional, default 0
      param <key> = <value>                     # repeatable
    end

Values run to the end of the line and are stripped of surrounding whitespace;
inline comments are not supported. ``serialize_dagfile`` emits the canonical
form, and ``parse_dagfile(serialize_dagfile(spec)) == spec`` for every valid
spec whose param values survive stripping.
"""

from __future__ import annotations

from .dag import DagSpec, ResourceHint, RetryPolicy, TaskSpec


class DagfileParseError(ValueError):
    """Syntax or value error in a dagfile document, located by line number."""

    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def parse_dagfile(text: str) -> DagSpec:
    dag_id: str | None = None
    version: int | None = None
    tasks: list[TaskSpec] = []

    current: dict[str, object] | None = None

    def fail(line_no: int, msg: str) -> DagfileParseError:
        return DagfileParseError(line_no, msg)

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue

        if current is None:
            if line.startswith("task "):
                task_id = line[len("task ") :].strip()
                if not task_id:
                    raise fail(line_no, "task block needs a task id")
                current = {
                    "task_id": task_id,
                    "kind": None,
                    "upstream": (),
                    "retries": 0,
                    "backoff_seconds": 0.0,
                    "cpus": 1,
                    "memory_mb": 256,
                    "gpus": 0,
                    "params": {},
                    "line": line_no,
                }
                continue
            key, value = _split_assignment(line, line_no)
            if key == "dag_id":
                dag_id = value
            elif key == "version":
                version = _parse_int(value, line_no, minimum=1, name="version")
            else:
                raise fail(line_no, f"unknown top-level key {key!r}")
            continue

        if line == "end":
            if current["kind"] is None:
                raise fail(line_no, f"task {current['task_id']!r} has no kind")
            tasks.append(
                TaskSpec(
                    task_id=str(current["task_id"]),
                    kind=str(current["kind"]),
                    params=dict(current["params"]),  # type: ignore[arg-type]
                    upstream=tuple(current["upstream"]),  # type: ignore[arg-type]
                    retry_policy=RetryPolicy(
                        max_retries=int(current["retries"]),  # type: ignore[arg-type]
                        backoff_seconds=float(current["backoff_seconds"]),  # type: ignore[arg-type]
                    ),
                    resource_hint=ResourceHint(
                        cpus=int(current["cpus"]),  # type: ignore[arg-type]
                        memory_mb=int(current["memory_mb"]),  # type: ignore[arg-type]
                        gpus=int(current["gpus"]),  # type: ignore[arg-type]
                    ),
                )
            )
            current = None
            continue

        if line.startswith("param "):
            body = line[len("param ") :]
            key, value = _split_assignment(body, line_no)
            params = current["params"]
            assert isinstance(params, dict)
            if key in params:
                raise fail(line_no, f"duplicate param {key!r}")
            params[key] = value
            continue

        key, value = _split_assignment(line, line_no)
        if key == "kind":
            current["kind"] = value
        elif key == "upstream":
            current["upstream"] = tuple(p.strip() for p in value.split(",") if p.strip())
        elif key == "retries":
            current["retries"] = _parse_int(value, line_no, minimum=0, name="retries")
        elif key == "backoff_seconds":
            current["backoff_seconds"] = _parse_float(value, line_no, minimum=0.0, name="backoff_seconds")
        elif key == "cpus":
            current["cpus"] = _parse_int(value, line_no, minimum=1, name="cpus")
        elif key == "memory_mb":
            current["memory_mb"] = _parse_int(value, line_no, minimum=1, name="memory_mb")
        elif key == "gpus":
            current["gpus"] = _parse_int(value, line_no, minimum=0, name="gpus")
        else:
            raise fail(line_no, f"unknown task key {key!r}")

    if current is not None:
        raise DagfileParseError(int(current["line"]), f"task {current['task_id']!r} not closed with 'end'")  # type: ignore[arg-type]
    if dag_id is None:
        raise DagfileParseError(1, "missing dag_id")
    if version is None:
        raise DagfileParseError(1, "missing version")
    if not tasks:
        raise DagfileParseError(1, "document defines no tasks")

    try:
        return DagSpec(dag_id=dag_id, version=version, tasks=tuple(tasks))
    except ValueError as exc:
        raise DagfileParseError(1, str(exc)) from exc


def serialize_dagfile(spec: DagSpec) -> str:
    lines: list[str] = [f"dag_id = {spec.dag_id}", f"version = {spec.version}", ""]
    for task in spec.tasks:
        lines.append(f"task {task.task_id}")
        lines.append(f"  kind = {task.kind}")
        if task.upstream:
            lines.append(f"  upstream = {', '.join(task.upstream)}")
        if task.retry_policy.max_retries:
            lines.append(f"  retries = {task.retry_policy.max_retries}")
        if task.retry_policy.backoff_seconds:
            lines.append(f"  backoff_seconds = {task.retry_policy.backoff_seconds!r}")
        hint = task.resource_hint
        if hint.cpus != 1:
            lines.append(f"  cpus = {hint.cpus}")
        if hint.memory_mb != 256:
            lines.append(f"  memory_mb = {hint.memory_mb}")
        if hint.gpus:
            lines.append(f"  gpus = {hint.gpus}")
        for key in task.params:
            lines.append(f"  param {key} = {task.params[key]}")
        lines.append("end")
        lines.append("")
    return "\n".join(lines)


def _split_assignment(line: str, line_no: int) -> tuple[str, str]:
    if "=" not in line:
        raise DagfileParseError(line_no, f"expected 'key = value', got {line!r}")
    key, _, value = line.partition("=")
    key = key.strip()
    if not key or " " in key:
        raise DagfileParseError(line_no, f"bad key in {line!r}")
    return key, value.strip()


def _parse_int(value: str, line_no: int, *, minimum: int, name: str) -> int:
    try:
        parsed = int(value)
    except ValueError:
        raise DagfileParseError(line_no, f"{name} must be an integer, got {value!r}") from None
    if parsed < minimum:
        raise DagfileParseError(line_no, f"{name} must be >= {minimum}, got {parsed}")
    return parsed


def _parse_float(value: str, line_no: int, *, minimum: float, name: str) -> float:
    try:
        parsed = float(value)
    except ValueError:
        raise DagfileParseError(line_no, f"{name} must be a number, got {value!r}") from None
    if parsed < minimum:
        raise DagfileParseError(line_no, f"{name} must be >= {minimum}, got {parsed}")
    return parsed
