/**
 * Client-side run state: a verbatim mirror of API payloads.
 *
 * The store performs no state transitions of its own — every task and run
 * state it holds was copied, unmodified, from a server response. Views
 * render from here; nothing else feeds it.
 */

import type { RunSummaryView, RunView } from "./types";

export type StoreListener = () => void;

export class RunStore {
  private runs = new Map<string, RunView>();
  private summaries: RunSummaryView[] = [];
  private listeners: StoreListener[] = [];

  subscribe(listener: StoreListener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  applyRun(run: RunView): void {
    this.runs.set(run.run_id, run);
    this.notify();
  }

  applySummaries(summaries: RunSummaryView[]): void {
    this.summaries = summaries;
    this.notify();
  }

  run(runId: string): RunView | undefined {
    return this.runs.get(runId);
  }

  allSummaries(): readonly RunSummaryView[] {
    return this.summaries;
  }

  /** Every distinct state string currently held, for provenance assertions. */
  heldStates(): Set<string> {
    const held = new Set<string>();
    for (const run of this.runs.values()) {
      held.add(run.state);
      for (const task of Object.values(run.task_instances)) held.add(task.state);
    }
    for (const summary of this.summaries) {
      held.add(summary.state);
      for (const state of Object.keys(summary.task_counts)) held.add(state);
    }
    return held;
  }
}
