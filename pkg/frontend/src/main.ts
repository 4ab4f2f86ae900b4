/**
 * Hash-routed single-page console over the gateway API.
 *
 * Routes: #/dags, #/dags/<id>, #/dags/<id>/trigger, #/runs,
 * #/runs/<id>, #/runs/<id>/tasks/<task>, #/runs/<id>/artifacts.
 * Polling honors the fixed 2 s cadence with failure backoff; 401 responses
 * drop back to the token screen; all other API errors surface verbatim.
 */

import { ApiClient, ApiRequestError } from "./api";
import { checkConfigText } from "./configcheck";
import { Poller, PollerRegistry } from "./poller";
import { RunStore } from "./state";
import type { DagTask } from "./types";
import {
  clear,
  renderArtifacts,
  renderChrome,
  renderDagDetail,
  renderDagList,
  renderError,
  renderLogViewer,
  renderRunDetail,
  renderRunList,
  renderTokenScreen,
  renderTriggerForm,
} from "./views";

const DEFAULT_CONFIG = `[project]
name = survey
input_dir = ./frames
output_dir = ./output

[photogrammetry]
variant = DEPTH_MAPS_DIRECT
grid_resolution = 64

[ml]
enabled = true
`;

export class App {
  readonly store = new RunStore();
  readonly pollers = new PollerRegistry();
  private client: ApiClient | null = null;
  private tokenNotice: string | undefined;

  constructor(
    private readonly root: HTMLElement,
    private readonly baseUrl: string,
    private readonly storage: Storage = sessionStorage,
  ) {}

  start(): void {
    window.addEventListener("hashchange", () => void this.route());
    void this.route();
  }

  api(): ApiClient {
    if (!this.client) throw new Error("no API client before token entry");
    return this.client;
  }

  private onToken(token: string): void {
    this.storage.setItem("surveyflow-token", token);
    this.client = new ApiClient(this.baseUrl, token);
    this.tokenNotice = undefined;
    void this.route();
  }

  private handleFailure(container: HTMLElement, error: unknown): void {
    if (error instanceof ApiRequestError && error.status === 401) {
      this.storage.removeItem("surveyflow-token");
      this.client = null;
      this.tokenNotice = `token rejected (401): ${error.message}`;
      this.pollers.stopAll();
      renderTokenScreen(this.root, (token) => this.onToken(token), this.tokenNotice);
      return;
    }
    if (error instanceof ApiRequestError) {
      renderError(container, error.status, error.message);
      return;
    }
    renderError(container, 0, String(error));
  }

  async route(): Promise<void> {
    const token = this.storage.getItem("surveyflow-token");
    if (!token) {
      this.pollers.stopAll();
      renderTokenScreen(this.root, (t) => this.onToken(t), this.tokenNotice);
      return;
    }
    if (!this.client) this.client = new ApiClient(this.baseUrl, token);

    const hash = window.location.hash || "#/dags";
    const parts = hash.replace(/^#\//, "").split("/").map(decodeURIComponent);
    this.pollers.stopAll();

    if (parts[0] === "dags" && parts.length === 1) return this.showDags();
    if (parts[0] === "dags" && parts.length === 2 && parts[1]) return this.showDag(parts[1]);
    if (parts[0] === "dags" && parts.length === 3 && parts[2] === "trigger" && parts[1])
      return this.showTrigger(parts[1]);
    if (parts[0] === "runs" && parts.length === 1) return this.showRuns();
    if (parts[0] === "runs" && parts.length === 2 && parts[1]) return this.showRun(parts[1]);
    if (parts[0] === "runs" && parts.length === 4 && parts[2] === "tasks" && parts[1] && parts[3])
      return this.showLog(parts[1], parts[3]);
    if (parts[0] === "runs" && parts.length === 3 && parts[2] === "artifacts" && parts[1])
      return this.showArtifacts(parts[1]);
    window.location.hash = "#/dags";
  }

  private async showDags(): Promise<void> {
    const view = renderChrome(this.root, "dags");
    try {
      const { dags } = await this.api().listDags();
      renderDagList(view, dags);
    } catch (error) {
      this.handleFailure(view, error);
    }
  }

  private async showDag(dagId: string): Promise<void> {
    const view = renderChrome(this.root, "dags");
    try {
      const dag = await this.api().getDag(dagId);
      renderDagDetail(view, dag);
    } catch (error) {
      this.handleFailure(view, error);
    }
  }

  private async showTrigger(dagId: string): Promise<void> {
    const view = renderChrome(this.root, "dags");
    renderTriggerForm(view, dagId, DEFAULT_CONFIG, {
      validate: checkConfigText,
      submit: (text) => void this.trigger(view, dagId, text),
    });
  }

  private async trigger(view: HTMLElement, dagId: string, text: string): Promise<void> {
    try {
      const { run_id } = await this.api().triggerRun(dagId, text);
      window.location.hash = `#/runs/${encodeURIComponent(run_id)}`;
    } catch (error) {
      this.handleFailure(view, error);
    }
  }

  private async showRuns(): Promise<void> {
    const view = renderChrome(this.root, "runs");
    const poller = new Poller(async () => {
      const { runs } = await this.api().listRuns();
      this.store.applySummaries(runs);
      renderRunList(view, this.store.allSummaries());
      return true;
    });
    this.pollers.ensure("__run_list__", () => poller);
  }

  private async showRun(runId: string): Promise<void> {
    const view = renderChrome(this.root, "runs");
    let tasks: DagTask[] | null = null;

    const redraw = () => {
      const run = this.store.run(runId);
      if (!run) return;
      renderRunDetail(view, run, tasks, {
        pause: () => void this.confirmAnd(view, runId, "Pause this run?", () => this.api().pauseRun(runId)),
        resume: () =>
          void this.confirmAnd(view, runId, "Resume this run?", () => this.api().resumeRun(runId)),
        retry: (taskId) =>
          void this.confirmAnd(view, runId, `Retry ${taskId} and everything downstream?`, () =>
            this.api().retryTask(runId, taskId),
          ),
      });
    };

    const poller = new Poller(async () => {
      const { run } = await this.api().getRun(runId);
      if (tasks === null) {
        try {
          tasks = (await this.api().getDag(run.dag_id)).tasks;
        } catch {
          tasks = null; // graph view degrades to the task table
        }
      }
      this.store.applyRun(run);
      redraw();
      return true; // keep polling: paused/terminal runs can still be retried
    });
    this.pollers.ensure(runId, () => poller);
  }

  private async confirmAnd(
    view: HTMLElement,
    runId: string,
    question: string,
    action: () => Promise<unknown>,
  ): Promise<void> {
    if (!window.confirm(question)) return;
    try {
      await action();
      const { run } = await this.api().getRun(runId);
      this.store.applyRun(run);
      void this.route();
    } catch (error) {
      this.handleFailure(view, error);
    }
  }

  private async showLog(runId: string, taskId: string): Promise<void> {
    const view = renderChrome(this.root, "runs");
    const pre = renderLogViewer(view, runId, taskId);
    let offset = 0;
    const poller = new Poller(async () => {
      const chunk = await this.api().getLog(runId, taskId, offset);
      if (chunk.log) {
        pre.append(document.createTextNode(chunk.log));
      }
      offset = chunk.next_offset;
      return true;
    });
    this.pollers.ensure(`${runId}/${taskId}/log`, () => poller);
  }

  private async showArtifacts(runId: string): Promise<void> {
    const view = renderChrome(this.root, "runs");
    try {
      const { artifacts } = await this.api().listArtifacts(runId);
      renderArtifacts(view, runId, artifacts, (path) => this.api().artifactUrl(runId, path));
    } catch (error) {
      this.handleFailure(view, error);
    }
  }
}

declare global {
  interface Window {
    SURVEYFLOW_API?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const base = window.SURVEYFLOW_API ?? `${window.location.protocol}//${window.location.hostname}:8350`;
  const app = new App(document.getElementById("app") as HTMLElement, base);
  app.start();
}

export { clear };
