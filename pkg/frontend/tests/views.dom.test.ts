// @vitest-environment jsdom
import { beforeEach, describe, expect, it, vi } from "vitest";

import { RunStore } from "../src/state";
import type { DagTask, RunView, TaskState } from "../src/types";
import { progressFraction } from "../src/types";
import {
  renderGraphSvg,
  renderRunDetail,
  renderTokenScreen,
  renderTriggerForm,
} from "../src/views";

function runFixture(states: Record<string, TaskState>, runState: RunView["state"]): RunView {
  const task_instances: RunView["task_instances"] = {};
  for (const [taskId, state] of Object.entries(states)) {
    task_instances[taskId] = {
      task_id: taskId,
      state,
      attempt: state === "QUEUED" ? 0 : 1,
      started_at: null,
      ended_at: null,
      log_ref: `runs/r1/logs/${taskId}.txt`,
    };
  }
  return {
    run_id: "r1",
    dag_id: "d",
    version: 1,
    state: runState,
    created_at: "2026-08-08T00:00:00+00:00",
    config_text: "[project]\ninput_dir = ./x\n",
    workspace_retained: null,
    task_instances,
  };
}

const tasks: DagTask[] = [
  { task_id: "a", kind: "k", upstream: [] },
  { task_id: "b", kind: "k", upstream: ["a"] },
  { task_id: "c", kind: "k", upstream: ["b"] },
];

beforeEach(() => {
  document.body.innerHTML = "<div id='root'></div>";
});

const root = () => document.getElementById("root") as HTMLElement;

describe("run detail view", () => {
  it("renders exactly the API's states, nothing invented", () => {
    const run = runFixture({ a: "SUCCESS", b: "RUNNING", c: "QUEUED" }, "RUNNING");
    renderRunDetail(root(), run, tasks, { pause() {}, resume() {}, retry() {} });

    const chipFor = (taskId: string) =>
      root().querySelector(`[data-task-state="${taskId}"]`)?.textContent;
    expect(chipFor("a")).toBe("SUCCESS");
    expect(chipFor("b")).toBe("RUNNING");
    expect(chipFor("c")).toBe("QUEUED");
    expect(root().querySelector("#run-state")?.textContent).toBe("RUNNING");

    // every state string in the DOM exists in the API payload
    const apiStates = new Set<string>([run.state, ...Object.values(run.task_instances).map((t) => t.state)]);
    for (const chip of root().querySelectorAll(".state-chip")) {
      expect(apiStates.has(chip.textContent ?? "")).toBe(true);
    }
  });

  it("derives progress as settled tasks over total", () => {
    const run = runFixture({ a: "SUCCESS", b: "SKIPPED", c: "RUNNING" }, "RUNNING");
    expect(progressFraction(run)).toBeCloseTo(2 / 3);
    renderRunDetail(root(), run, tasks, { pause() {}, resume() {}, retry() {} });
    const fill = root().querySelector("#run-progress") as HTMLElement;
    expect(fill.getAttribute("style")).toContain("66.7%");
  });

  it("pause enabled only while RUNNING, resume only while PAUSED", () => {
    renderRunDetail(root(), runFixture({ a: "SUCCESS" }, "RUNNING"), tasks, {
      pause() {},
      resume() {},
      retry() {},
    });
    expect((root().querySelector("#run-pause") as HTMLButtonElement).disabled).toBe(false);
    expect((root().querySelector("#run-resume") as HTMLButtonElement).disabled).toBe(true);

    renderRunDetail(root(), runFixture({ a: "QUEUED" }, "PAUSED"), tasks, {
      pause() {},
      resume() {},
      retry() {},
    });
    expect((root().querySelector("#run-pause") as HTMLButtonElement).disabled).toBe(true);
    expect((root().querySelector("#run-resume") as HTMLButtonElement).disabled).toBe(false);
  });

  it("retry is offered for FAILED and UPSTREAM_FAILED tasks when not RUNNING", () => {
    const run = runFixture({ a: "SUCCESS", b: "FAILED", c: "UPSTREAM_FAILED" }, "FAILED");
    const retried: string[] = [];
    renderRunDetail(root(), run, tasks, {
      pause() {},
      resume() {},
      retry(taskId) {
        retried.push(taskId);
      },
    });
    const buttons = [...root().querySelectorAll<HTMLButtonElement>("[data-retry]")];
    expect(buttons.find((b) => b.dataset.retry === "a")?.disabled).toBe(true);
    const bButton = buttons.find((b) => b.dataset.retry === "b")!;
    const cButton = buttons.find((b) => b.dataset.retry === "c")!;
    expect(bButton.disabled).toBe(false);
    expect(cButton.disabled).toBe(false);
    bButton.click();
    expect(retried).toEqual(["b"]);
  });
});

describe("graph view", () => {
  it("colors nodes with the API state verbatim", () => {
    const svg = renderGraphSvg(tasks, { a: "SUCCESS", b: "FAILED", c: "QUEUED" });
    const rect = (taskId: string) => svg.querySelector(`rect[data-task="${taskId}"]`)!;
    expect(rect("a").getAttribute("data-state")).toBe("SUCCESS");
    expect(rect("b").getAttribute("class")).toContain("state-FAILED");
    expect(rect("c").getAttribute("class")).toContain("state-QUEUED");
  });
});

describe("trigger form", () => {
  it("hands the editor text to submit byte-for-byte", () => {
    const submitted: string[] = [];
    renderTriggerForm(root(), "d", "[project]\ninput_dir = ./frames\n", {
      validate: () => [],
      submit: (text) => submitted.push(text),
    });
    const editor = root().querySelector("#config-editor") as HTMLTextAreaElement;
    const typed = "[project]\nname = exact é\ninput_dir = ./frames\n# trailing comment";
    editor.value = typed;
    editor.dispatchEvent(new Event("input"));
    (root().querySelector("#trigger-submit") as HTMLButtonElement).click();
    expect(submitted).toEqual([typed]);
  });

  it("blocks submission on validation errors", () => {
    renderTriggerForm(root(), "d", "nonsense", {
      validate: (text) =>
        text === "nonsense" ? [{ line: 1, severity: "error", message: "bad" }] : [],
      submit: () => {},
    });
    const submit = root().querySelector("#trigger-submit") as HTMLButtonElement;
    expect(submit.disabled).toBe(true);
    const editor = root().querySelector("#config-editor") as HTMLTextAreaElement;
    editor.value = "[project]\ninput_dir = ./x\n";
    editor.dispatchEvent(new Event("input"));
    expect(submit.disabled).toBe(false);
  });
});

describe("token screen", () => {
  it("submits a pasted token", () => {
    const seen: string[] = [];
    renderTokenScreen(root(), (token) => seen.push(token));
    const input = root().querySelector("#token-input") as HTMLInputElement;
    input.value = "  op-secret  ";
    (root().querySelector("#token-submit") as HTMLButtonElement).click();
    expect(seen).toEqual(["op-secret"]);
  });

  it("shows the rejection notice when routed back", () => {
    renderTokenScreen(root(), () => {}, "token rejected (401): bad");
    expect(root().querySelector("#token-notice")?.textContent).toContain("401");
  });
});

describe("store provenance", () => {
  it("holds only what API payloads put there", () => {
    const store = new RunStore();
    const run = runFixture({ a: "SUCCESS", b: "UPSTREAM_FAILED" }, "FAILED");
    store.applyRun(run);
    expect([...store.heldStates()].sort()).toEqual(["FAILED", "SUCCESS", "UPSTREAM_FAILED"]);
  });
});
