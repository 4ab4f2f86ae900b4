/**
 * Typed client for the gateway API.
 *
 * Every response that comes off the wire is announced to `onResponse`
 * observers before anything else sees it — the seam UI tests use to prove
 * the interface renders only states the server actually delivered.
 */

import type {
  ArtifactEntry,
  DagDetail,
  DagSummary,
  LogChunk,
  RunSummaryView,
  RunView,
} from "./types";

export interface WireResponse {
  method: string;
  path: string;
  status: number;
  body: unknown;
}

export type ResponseListener = (response: WireResponse) => void;

export class ApiRequestError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiRequestError";
  }
}

export class ApiClient {
  private listeners: ResponseListener[] = [];

  constructor(
    public readonly baseUrl: string,
    private token: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  onResponse(listener: ResponseListener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  setToken(token: string): void {
    this.token = token;
  }

  private async request<T>(method: string, path: string, body?: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: { Authorization: `Bearer ${this.token}` },
      body: body !== undefined ? body : null,
    });
    const payload: unknown = await response.json();
    for (const listener of this.listeners) {
      listener({ method, path, status: response.status, body: payload });
    }
    if (!response.ok) {
      const message =
        typeof payload === "object" && payload !== null && "error" in payload
          ? String((payload as { error: unknown }).error)
          : `HTTP ${response.status}`;
      throw new ApiRequestError(response.status, message);
    }
    return payload as T;
  }

  listDags(): Promise<{ dags: DagSummary[] }> {
    return this.request("GET", "/api/dags");
  }

  getDag(dagId: string): Promise<DagDetail> {
    return this.request("GET", `/api/dags/${encodeURIComponent(dagId)}`);
  }

  registerDag(dagfileText: string): Promise<{ dag_id: string; version: number }> {
    return this.request("POST", "/api/dags", dagfileText);
  }

  /** The config text is sent exactly as typed — byte-for-byte. */
  triggerRun(dagId: string, configText: string): Promise<{ run_id: string }> {
    return this.request("POST", `/api/dags/${encodeURIComponent(dagId)}/runs`, configText);
  }

  listRuns(filter?: { state?: string; dag_id?: string }): Promise<{ runs: RunSummaryView[] }> {
    const params = new URLSearchParams();
    if (filter?.state) params.set("state", filter.state);
    if (filter?.dag_id) params.set("dag_id", filter.dag_id);
    const query = params.toString();
    return this.request("GET", `/api/runs${query ? "?" + query : ""}`);
  }

  getRun(runId: string): Promise<{ run: RunView }> {
    return this.request("GET", `/api/runs/${encodeURIComponent(runId)}`);
  }

  pauseRun(runId: string): Promise<{ run_id: string; state: string }> {
    return this.request("POST", `/api/runs/${encodeURIComponent(runId)}/pause`);
  }

  resumeRun(runId: string): Promise<{ run_id: string; state: string }> {
    return this.request("POST", `/api/runs/${encodeURIComponent(runId)}/resume`);
  }

  retryTask(runId: string, taskId: string): Promise<{ run_id: string; task_id: string; state: string }> {
    return this.request(
      "POST",
      `/api/runs/${encodeURIComponent(runId)}/tasks/${encodeURIComponent(taskId)}/retry`,
    );
  }

  getLog(runId: string, taskId: string, offset: number): Promise<LogChunk> {
    return this.request(
      "GET",
      `/api/runs/${encodeURIComponent(runId)}/tasks/${encodeURIComponent(taskId)}/log?offset=${offset}`,
    );
  }

  listArtifacts(runId: string): Promise<{ run_id: string; artifacts: ArtifactEntry[] }> {
    return this.request("GET", `/api/runs/${encodeURIComponent(runId)}/artifacts`);
  }

  artifactUrl(runId: string, path: string): string {
    const encoded = path.split("/").map(encodeURIComponent).join("/");
    return `${this.baseUrl}/api/runs/${encodeURIComponent(runId)}/artifacts/${encoded}`;
  }
}
