/** Payload shapes served by the gateway API (docs/api_reference.md). */

export type TaskState =
  | "QUEUED"
  | "RUNNING"
  | "SUCCESS"
  | "FAILED"
  | "UPSTREAM_FAILED"
  | "SKIPPED";

export type RunState = "RUNNING" | "PAUSED" | "SUCCESS" | "FAILED";

export const TERMINAL_TASK_STATES: ReadonlySet<TaskState> = new Set([
  "SUCCESS",
  "FAILED",
  "UPSTREAM_FAILED",
  "SKIPPED",
]);

export interface DagSummary {
  dag_id: string;
  version: number;
  task_count: number;
}

export interface DagTask {
  task_id: string;
  kind: string;
  upstream: string[];
}

export interface DagDetail {
  dag_id: string;
  version: number;
  tasks: DagTask[];
}

export interface TaskInstanceView {
  task_id: string;
  state: TaskState;
  attempt: number;
  started_at: string | null;
  ended_at: string | null;
  log_ref: string;
}

export interface RunView {
  run_id: string;
  dag_id: string;
  version: number;
  state: RunState;
  created_at: string;
  config_text: string;
  workspace_retained: string | null;
  task_instances: Record<string, TaskInstanceView>;
}

export interface RunSummaryView {
  run_id: string;
  dag_id: string;
  version: number;
  state: RunState;
  created_at: string;
  task_counts: Record<string, number>;
}

export interface LogChunk {
  log: string;
  next_offset: number;
}

export interface ArtifactEntry {
  path: string;
  size_bytes: number;
  sha256: string;
}

export interface ApiError {
  status: number;
  error: string;
}

/** Progress = settled tasks / total tasks, derived from API states only. */
export function progressFraction(run: RunView): number {
  const tasks = Object.values(run.task_instances);
  if (tasks.length === 0) return 0;
  const settled = tasks.filter((t) => TERMINAL_TASK_STATES.has(t.state)).length;
  return settled / tasks.length;
}
