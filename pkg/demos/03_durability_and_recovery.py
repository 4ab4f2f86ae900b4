"""
Durability: the event log, snapshots, and crash recovery
========================================================

Every run is an append-only sequence of events under data_dir/events.log,
with periodic full-state snapshots bounding replay time. Killing the process
mid-run loses nothing: replay resets in-flight tasks to QUEUED (attempt
counters intact), the run parks as PAUSED, and resume finishes the job.
"""

import tempfile
from pathlib import Path

from surveyflow import DagSpec, Engine, ExecutorKind, MetadataStore, TaskSpec, parse_config, replay

scratch = Path(tempfile.mkdtemp(prefix="surveyflow-demo03-"))
(scratch / "frames").mkdir()
config = parse_config(
    f"[project]\nname = demo\ninput_dir = {scratch / 'frames'}\noutput_dir = {scratch / 'out'}\n"
)

chain = DagSpec(
    dag_id="steps",
    version=1,
    tasks=tuple(
        TaskSpec(f"step_{i}", "compute", upstream=(f"step_{i-1}",) if i else ())
        for i in range(6)
    ),
)

# run to completion and look at the event stream
data_dir = scratch / "data"
with MetadataStore(data_dir) as store:
    record = Engine(store).execute_run(chain, config, ExecutorKind.sequential())
    print("events persisted:", store.last_seq)
    for event in list(store.events())[:6]:
        print(f"  seq {event.seq:3d}  {event.kind.value:20s} {event.payload.get('task_id', '')}")
    print("  ...")

# simulate a crash: keep only the first half of the log in a fresh directory
lines = (data_dir / "events.log").read_text().splitlines(keepends=True)
crash_dir = scratch / "crashed"
crash_dir.mkdir()
(crash_dir / "events.log").write_text("".join(lines[: len(lines) // 2]))

state = replay(crash_dir)
survivor = state.runs[record.run_id]
print("\nafter the crash, replay sees:")
for tid, inst in sorted(survivor.task_instances.items()):
    print(f"  {tid:8s} {inst.state.value}")

# reopening the store through an engine parks the orphaned run as PAUSED;
# resume completes it with the same final state map as the uninterrupted run
with MetadataStore(crash_dir) as store:
    engine = Engine(store)
    engine.resume_run(record.run_id)
    recovered = engine.wait_run(record.run_id)

print("\nrecovered run:", recovered.state.value)
print("state maps equal:", recovered.task_states() == record.task_states())
