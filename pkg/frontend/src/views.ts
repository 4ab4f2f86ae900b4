/**
 * DOM rendering. Views are pure functions of store/API data plus handler
 * callbacks; every state label and color class comes verbatim from an API
 * state string — the client never computes a state of its own.
 */

import { layoutGraph, NODE_H, NODE_W } from "./graph";
import type {
  ArtifactEntry,
  DagDetail,
  DagSummary,
  DagTask,
  RunSummaryView,
  RunView,
  TaskState,
} from "./types";
import { progressFraction } from "./types";

const SVG_NS = "http://www.w3.org/2000/svg";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  for (const child of children) node.append(child);
  return node;
}

export function clear(container: HTMLElement): void {
  while (container.firstChild) container.removeChild(container.firstChild);
}

// -- token screen -------------------------------------------------------------

export function renderTokenScreen(
  container: HTMLElement,
  onSubmit: (token: string) => void,
  notice?: string,
): void {
  clear(container);
  const input = el("input", {
    id: "token-input",
    type: "password",
    placeholder: "paste your bearer token",
    autocomplete: "off",
  });
  const button = el("button", { id: "token-submit", class: "primary" }, ["Enter console"]);
  button.addEventListener("click", () => {
    if (input.value.trim()) onSubmit(input.value.trim());
  });
  input.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && input.value.trim()) onSubmit(input.value.trim());
  });
  const box = el("div", { class: "token-box" }, [
    el("h1", {}, ["surveyflow console"]),
    el("p", { class: "dim" }, ["An OPERATOR token can trigger and control runs; a VIEWER token can watch."]),
    ...(notice ? [el("p", { class: "error-text", id: "token-notice" }, [notice])] : []),
    input,
    button,
  ]);
  container.append(el("div", { class: "token-wrap" }, [box]));
}

// -- layout chrome ---------------------------------------------------------------

export function renderChrome(container: HTMLElement, active: string): HTMLElement {
  clear(container);
  const nav = el("nav", {}, [
    el("a", { href: "#/dags", class: active === "dags" ? "active" : "" }, ["Workflows"]),
    el("a", { href: "#/runs", class: active === "runs" ? "active" : "" }, ["Runs"]),
  ]);
  const main = el("main", { id: "view" });
  container.append(el("header", {}, [el("span", { class: "brand" }, ["surveyflow"]), nav]), main);
  return main;
}

export function renderError(container: HTMLElement, status: number, message: string): void {
  container.append(
    el("div", { class: "banner error", role: "alert" }, [`API error ${status}: ${message}`]),
  );
}

// -- dag list ------------------------------------------------------------------------

export function renderDagList(container: HTMLElement, dags: DagSummary[]): void {
  clear(container);
  container.append(el("h2", {}, ["Workflows"]));
  if (dags.length === 0) {
    container.append(el("p", { class: "dim" }, ["No workflow graphs registered yet."]));
    return;
  }
  const rows = dags.map((dag) =>
    el("tr", {}, [
      el("td", {}, [el("a", { href: `#/dags/${encodeURIComponent(dag.dag_id)}` }, [dag.dag_id])]),
      el("td", {}, [`v${dag.version}`]),
      el("td", {}, [String(dag.task_count)]),
      el("td", {}, [
        el("a", { class: "button", href: `#/dags/${encodeURIComponent(dag.dag_id)}/trigger` }, [
          "Trigger run",
        ]),
      ]),
    ]),
  );
  container.append(
    el("table", { class: "list" }, [
      el("thead", {}, [
        el("tr", {}, [
          el("th", {}, ["graph"]),
          el("th", {}, ["version"]),
          el("th", {}, ["tasks"]),
          el("th", {}, [""]),
        ]),
      ]),
      el("tbody", {}, rows),
    ]),
  );
}

// -- graph view -----------------------------------------------------------------------

export function renderGraphSvg(
  tasks: DagTask[],
  states: Record<string, TaskState> | null,
): SVGSVGElement {
  const layout = layoutGraph(tasks);
  const svg = document.createElementNS(SVG_NS, "svg");
  const pad = 12;
  svg.setAttribute("viewBox", `${-pad} ${-pad} ${layout.width + 2 * pad} ${layout.height + 2 * pad}`);
  svg.setAttribute("width", String(layout.width + 2 * pad));
  svg.setAttribute("class", "dag-graph");

  for (const edge of layout.edges) {
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(edge.x1));
    line.setAttribute("y1", String(edge.y1));
    line.setAttribute("x2", String(edge.x2));
    line.setAttribute("y2", String(edge.y2));
    line.setAttribute("class", "dag-edge");
    svg.append(line);
  }

  for (const node of layout.nodes) {
    const group = document.createElementNS(SVG_NS, "g");
    const rect = document.createElementNS(SVG_NS, "rect");
    rect.setAttribute("x", String(node.x));
    rect.setAttribute("y", String(node.y));
    rect.setAttribute("width", String(NODE_W));
    rect.setAttribute("height", String(NODE_H));
    rect.setAttribute("rx", "6");
    const state = states?.[node.task_id];
    rect.setAttribute("class", `dag-node ${state ? `state-${state}` : "state-none"}`);
    rect.setAttribute("data-task", node.task_id);
    if (state) rect.setAttribute("data-state", state);
    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("x", String(node.x + NODE_W / 2));
    label.setAttribute("y", String(node.y + NODE_H / 2 + 4));
    label.setAttribute("text-anchor", "middle");
    label.textContent = node.task_id;
    group.append(rect, label);
    svg.append(group);
  }
  return svg;
}

export function renderDagDetail(container: HTMLElement, dag: DagDetail): void {
  clear(container);
  container.append(
    el("h2", {}, [`${dag.dag_id} `, el("span", { class: "dim" }, [`v${dag.version}`])]),
    el("div", { class: "actions" }, [
      el("a", { class: "button primary", href: `#/dags/${encodeURIComponent(dag.dag_id)}/trigger` }, [
        "Trigger run",
      ]),
    ]),
    renderGraphSvg(dag.tasks, null),
  );
}

// -- trigger form ---------------------------------------------------------------------------

export interface TriggerHandlers {
  validate: (text: string) => { line: number; severity: string; message: string }[];
  submit: (text: string) => void;
}

export function renderTriggerForm(
  container: HTMLElement,
  dagId: string,
  initialText: string,
  handlers: TriggerHandlers,
): void {
  clear(container);
  const editor = el("textarea", { id: "config-editor", rows: "18", spellcheck: "false" });
  editor.value = initialText;
  const diagnosticsBox = el("ul", { id: "config-diagnostics", class: "diagnostics" });
  const submit = el("button", { id: "trigger-submit", class: "primary" }, [
    `Trigger ${dagId}`,
  ]) as HTMLButtonElement;

  const refresh = () => {
    clear(diagnosticsBox);
    const found = handlers.validate(editor.value);
    for (const d of found) {
      diagnosticsBox.append(
        el("li", { class: d.severity }, [`line ${d.line}: ${d.message} (${d.severity})`]),
      );
    }
    submit.disabled = found.some((d) => d.severity === "error");
  };
  editor.addEventListener("input", refresh);
  submit.addEventListener("click", () => handlers.submit(editor.value));

  container.append(
    el("h2", {}, [`Trigger ${dagId}`]),
    el("p", { class: "dim" }, [
      "The document below is sent to the gateway exactly as written — byte for byte.",
    ]),
    editor,
    diagnosticsBox,
    el("div", { class: "actions" }, [submit]),
  );
  refresh();
}

// -- run list -----------------------------------------------------------------------------------

export function renderRunList(container: HTMLElement, runs: readonly RunSummaryView[]): void {
  clear(container);
  container.append(el("h2", {}, ["Runs"]));
  if (runs.length === 0) {
    container.append(el("p", { class: "dim" }, ["No runs yet."]));
    return;
  }
  const rows = runs.map((run) => {
    const total = Object.values(run.task_counts).reduce((a, b) => a + b, 0);
    const counts = Object.entries(run.task_counts)
      .sort()
      .map(([state, count]) => `${count} ${state}`)
      .join(", ");
    return el("tr", {}, [
      el("td", {}, [el("a", { href: `#/runs/${encodeURIComponent(run.run_id)}` }, [run.run_id])]),
      el("td", {}, [`${run.dag_id} v${run.version}`]),
      el("td", {}, [el("span", { class: `state-chip state-${run.state}` }, [run.state])]),
      el("td", { class: "dim" }, [`${total} tasks: ${counts}`]),
      el("td", { class: "dim" }, [run.created_at]),
    ]);
  });
  container.append(el("table", { class: "list" }, [el("tbody", {}, rows)]));
}

// -- run detail -----------------------------------------------------------------------------------

export interface RunDetailHandlers {
  pause: () => void;
  resume: () => void;
  retry: (taskId: string) => void;
}

export function renderRunDetail(
  container: HTMLElement,
  run: RunView,
  tasks: DagTask[] | null,
  handlers: RunDetailHandlers,
): void {
  clear(container);
  const fraction = progressFraction(run);
  const header = el("div", { class: "run-header" }, [
    el("h2", {}, [
      `Run ${run.run_id} `,
      el("span", { class: `state-chip state-${run.state}`, id: "run-state" }, [run.state]),
    ]),
    el("p", { class: "dim" }, [`${run.dag_id} v${run.version} — started ${run.created_at}`]),
    el("div", { class: "progress" }, [
      el("div", {
        class: "progress-fill",
        id: "run-progress",
        style: `width: ${(fraction * 100).toFixed(1)}%`,
      }),
    ]),
  ]);

  const pause = el("button", { id: "run-pause" }, ["Pause"]) as HTMLButtonElement;
  const resume = el("button", { id: "run-resume" }, ["Resume"]) as HTMLButtonElement;
  pause.disabled = run.state !== "RUNNING";
  resume.disabled = run.state !== "PAUSED";
  pause.addEventListener("click", handlers.pause);
  resume.addEventListener("click", handlers.resume);
  const actions = el("div", { class: "actions" }, [
    pause,
    resume,
    el("a", { class: "button", href: `#/runs/${encodeURIComponent(run.run_id)}/artifacts` }, [
      "Artifacts",
    ]),
  ]);

  const states: Record<string, TaskState> = {};
  for (const [taskId, instance] of Object.entries(run.task_instances)) {
    states[taskId] = instance.state;
  }
  const graph = tasks
    ? renderGraphSvg(tasks, states)
    : el("p", { class: "dim" }, ["graph definition unavailable"]);

  const rows = Object.values(run.task_instances)
    .sort((a, b) => a.task_id.localeCompare(b.task_id))
    .map((task) => {
      const retriable = task.state === "FAILED" || task.state === "UPSTREAM_FAILED";
      const retry = el(
        "button",
        { class: "small", "data-retry": task.task_id },
        ["Retry"],
      ) as HTMLButtonElement;
      retry.disabled = !retriable || run.state === "RUNNING";
      retry.addEventListener("click", () => handlers.retry(task.task_id));
      return el("tr", { "data-task-row": task.task_id }, [
        el("td", {}, [task.task_id]),
        el("td", {}, [
          el("span", { class: `state-chip state-${task.state}`, "data-task-state": task.task_id }, [
            task.state,
          ]),
        ]),
        el("td", {}, [String(task.attempt)]),
        el("td", {}, [
          el(
            "a",
            {
              href: `#/runs/${encodeURIComponent(run.run_id)}/tasks/${encodeURIComponent(task.task_id)}`,
            },
            ["log"],
          ),
        ]),
        el("td", {}, [retry]),
      ]);
    });

  container.append(
    header,
    actions,
    graph,
    el("table", { class: "list" }, [
      el("thead", {}, [
        el("tr", {}, [
          el("th", {}, ["task"]),
          el("th", {}, ["state"]),
          el("th", {}, ["attempts"]),
          el("th", {}, ["log"]),
          el("th", {}, [""]),
        ]),
      ]),
      el("tbody", {}, rows),
    ]),
  );
  if (run.workspace_retained) {
    container.append(
      el("p", { class: "banner" }, [`workspace retained for debugging: ${run.workspace_retained}`]),
    );
  }
}

// -- log viewer ----------------------------------------------------------------------------

export function renderLogViewer(container: HTMLElement, runId: string, taskId: string): HTMLPreElement {
  clear(container);
  const pre = el("pre", { id: "log-body", class: "log" });
  container.append(
    el("h2", {}, [`${taskId} — log`]),
    el("p", { class: "dim" }, [`run ${runId}; tail updates live`]),
    pre,
  );
  return pre;
}

// -- artifacts ------------------------------------------------------------------------------

export function renderArtifacts(
  container: HTMLElement,
  runId: string,
  artifacts: ArtifactEntry[],
  urlFor: (path: string) => string,
): void {
  clear(container);
  container.append(el("h2", {}, [`Run ${runId} — artifacts`]));
  if (artifacts.length === 0) {
    container.append(el("p", { class: "dim" }, ["Nothing exported yet."]));
    return;
  }
  const rows = artifacts.map((artifact) =>
    el("tr", {}, [
      el("td", {}, [
        el("a", { href: urlFor(artifact.path), download: "" }, [artifact.path]),
      ]),
      el("td", {}, [`${artifact.size_bytes} B`]),
      el("td", { class: "dim mono" }, [artifact.sha256.slice(0, 16)]),
    ]),
  );
  container.append(
    el("table", { class: "list" }, [
      el("thead", {}, [
        el("tr", {}, [el("th", {}, ["file"]), el("th", {}, ["size"]), el("th", {}, ["sha256"])]),
      ]),
      el("tbody", {}, rows),
    ]),
  );
}
