"""
Running workflows: executors, retries, failure propagation
==========================================================

The engine drives a run through a chosen executor. Every state change is an
event in the metadata store; the run record is always reconstructible from
disk. Deterministic task bodies make SEQUENTIAL and LOCAL_PARALLEL(n)
interchangeable — same final states, same outputs.
"""

import tempfile
from pathlib import Path

from surveyflow import (
    DagSpec,
    Engine,
    ExecutorKind,
    MetadataStore,
    RetryPolicy,
    TaskSpec,
    parse_config,
)

scratch = Path(tempfile.mkdtemp(prefix="surveyflow-demo02-"))
(scratch / "frames").mkdir()  # input_dir must exist at run start
config = parse_config(
    f"[project]\nname = demo\ninput_dir = {scratch / 'frames'}\noutput_dir = {scratch / 'out'}\n"
)

# a task that fails twice before succeeding, with two retries in its budget
flaky_chain = DagSpec(
    dag_id="flaky-chain",
    version=1,
    tasks=(
        TaskSpec("prepare", "compute"),
        TaskSpec(
            "wobbly",
            "flaky",
            params={"fail_attempts": "2"},
            upstream=("prepare",),
            retry_policy=RetryPolicy(max_retries=2, backoff_seconds=0.0),
        ),
        TaskSpec("publish", "compute", upstream=("wobbly",)),
    ),
)

with MetadataStore(scratch / "data") as store:
    engine = Engine(store)
    record = engine.execute_run(flaky_chain, config, ExecutorKind.sequential())
    print("run:", record.state.value)
    for tid, inst in sorted(record.task_instances.items()):
        print(f"  {tid:10s} {inst.state.value:8s} started {inst.attempt}x")

    # the per-attempt story is in the task log
    text, _ = store.read_task_log(record.run_id, "wobbly", 0)
    print("\nwobbly's log:")
    print(text)

# when retries run out, downstream tasks flip to UPSTREAM_FAILED eagerly
# while independent branches keep going
branches = DagSpec(
    dag_id="branches",
    version=1,
    tasks=(
        TaskSpec("root", "compute"),
        TaskSpec("doomed", "flaky", params={"fail_attempts": "99"}, upstream=("root",)),
        TaskSpec("after_doomed", "compute", upstream=("doomed",)),
        TaskSpec("healthy", "compute", upstream=("root",)),
    ),
)

with MetadataStore(scratch / "data2") as store:
    engine = Engine(store)
    record = engine.execute_run(branches, config, ExecutorKind.local_parallel(4))
    print("run:", record.state.value)
    for tid, inst in sorted(record.task_instances.items()):
        print(f"  {tid:12s} {inst.state.value}")

    # a failed task (and its downstream closure) can be re-queued by hand;
    # here 'doomed' always fails, so the verdict repeats
    engine.retry_task(record.run_id, "doomed")
    engine.resume_run(record.run_id)
    record = engine.wait_run(record.run_id)
    print("after manual retry:", record.state.value, f"(doomed started {record.task_instances['doomed'].attempt}x)")
