/**
 * UI flows against a live local gateway (the Python server, spawned here):
 * trigger -> watch -> pause -> resume, and fail -> retry -> success, driven
 * through the same client/store/poller stack the views render from.
 *
 * The fetch layer is wrapped so every request body and response payload is
 * recorded: the suite proves the trigger body goes out byte-for-byte and
 * that the store never holds a state string the API did not deliver first.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync, mkdirSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { Poller } from "../src/poller";
import { RunStore } from "../src/state";
import type { RunView } from "../src/types";

const OPERATOR = "live-op-token";

let server: ChildProcess;
let baseUrl = "";
let scratch = "";
let framesDir = "";

/** States delivered by the API so far, harvested from every response body. */
const delivered = new Set<string>();
const requestBodies: { path: string; body: string }[] = [];

function harvestStates(value: unknown): void {
  if (Array.isArray(value)) {
    for (const item of value) harvestStates(item);
    return;
  }
  if (typeof value === "object" && value !== null) {
    for (const [key, inner] of Object.entries(value)) {
      if (key === "state" && typeof inner === "string") delivered.add(inner);
      if (key === "task_counts" && typeof inner === "object" && inner !== null) {
        for (const state of Object.keys(inner)) delivered.add(state);
      }
      harvestStates(inner);
    }
  }
}

const recordingFetch: typeof fetch = async (input, init) => {
  if (typeof init?.body === "string") {
    requestBodies.push({ path: String(input), body: init.body });
  }
  const response = await fetch(input, init);
  const cloned = response.clone();
  try {
    harvestStates(await cloned.json());
  } catch {
    // non-JSON bodies carry no states
  }
  return response;
};

function makePng(path: string): void {
  // minimal 1x1 gray PNG, enough for input_dir to be readable at run start
  const png = Buffer.from(
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAAAAAA6fptVAAAACklEQVR4nGNiAAAABgADNjd8qAAAAABJRU5ErkJggg==",
    "base64",
  );
  writeFileSync(path, png);
}

beforeAll(async () => {
  scratch = mkdtempSync(join(tmpdir(), "surveyflow-ui-"));
  framesDir = join(scratch, "frames");
  mkdirSync(framesDir);
  makePng(join(framesDir, "f0.png"));
  writeFileSync(join(scratch, "tokens.txt"), `${OPERATOR} OPERATOR\n`);

  server = spawn(
    "python3",
    [
      "-m",
      "surveyflow.api",
      "--bind",
      "127.0.0.1:0",
      "--data-dir",
      join(scratch, "data"),
      "--tokens-file",
      join(scratch, "tokens.txt"),
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  baseUrl = await new Promise<string>((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(() => reject(new Error(`gateway never came up: ${buffer}`)), 20_000);
    server.stdout?.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = /gateway listening on (http:\/\/[^\s]+)/.exec(buffer);
      if (match?.[1]) {
        clearTimeout(timer);
        resolve(match[1]);
      }
    });
    server.on("exit", (code) => reject(new Error(`gateway exited early (${code}): ${buffer}`)));
  });
});

afterAll(() => {
  server?.kill();
});

function client(): ApiClient {
  return new ApiClient(baseUrl, OPERATOR, recordingFetch);
}

const SLEEPY_DAG = `dag_id = sleepy
version = 1

task s0
  kind = sleep
  param seconds = 0.5
end

task s1
  kind = sleep
  upstream = s0
  param seconds = 0.5
end

task s2
  kind = sleep
  upstream = s1
  param seconds = 0.5
end
`;

const FLAKY_DAG = `dag_id = shaky
version = 1

task a
  kind = compute
end

task b
  kind = flaky
  upstream = a
  param fail_attempts = 1
end

task c
  kind = compute
  upstream = b
end
`;

function configText(name: string): string {
  return `[project]\nname = ${name}\ninput_dir = ${framesDir}\noutput_dir = ${join(scratch, "out-" + name)}\n# typed by hand — must arrive verbatim\n`;
}

/** Poll through the UI's own stack until the run satisfies `done`. */
async function watch(
  api: ApiClient,
  store: RunStore,
  runId: string,
  done: (run: RunView) => boolean,
  guard: (run: RunView) => void = () => {},
): Promise<RunView> {
  return new Promise((resolve, reject) => {
    const timer = setTimeout(() => {
      poller.stop();
      reject(new Error(`run ${runId} never reached the awaited condition`));
    }, 60_000);
    const poller = new Poller(
      async () => {
        const { run } = await api.getRun(runId);
        store.applyRun(run);
        guard(run);
        if (done(run)) {
          clearTimeout(timer);
          poller.stop();
          resolve(run);
          return false;
        }
        return true;
      },
      { intervalMs: 100 },
    );
    poller.start();
  });
}

describe("console flows against the live gateway", () => {
  it("trigger, watch states progress, pause, resume to completion", async () => {
    const api = client();
    const store = new RunStore();

    // the store only ever holds states the API already delivered
    store.subscribe(() => {
      for (const state of store.heldStates()) {
        expect(delivered.has(state), `state ${state} was never delivered by the API`).toBe(true);
      }
    });

    await api.registerDag(SLEEPY_DAG);
    const body = configText("sleepy");
    const { run_id } = await api.triggerRun("sleepy", body);

    // byte-for-byte trigger body on the wire, and in the stored snapshot
    const sent = requestBodies.find((r) => r.path.endsWith("/api/dags/sleepy/runs"));
    expect(sent?.body).toBe(body);

    // watch: first task leaves QUEUED and runs without any page reload
    const seenStates = new Set<string>();
    await watch(
      api,
      store,
      run_id,
      (run) => run.task_instances["s0"]?.state === "RUNNING",
      (run) => {
        const s0 = run.task_instances["s0"];
        if (s0) seenStates.add(s0.state);
      },
    );

    // pause mid-run: in-flight finishes, nothing new dispatches
    const paused = await api.pauseRun(run_id);
    expect(paused.state).toBe("PAUSED");
    const { run: afterPause } = await api.getRun(run_id);
    store.applyRun(afterPause);
    expect(afterPause.state).toBe("PAUSED");
    expect(afterPause.task_instances["s2"]?.state).toBe("QUEUED");

    // resume and watch it finish
    const resumed = await api.resumeRun(run_id);
    expect(resumed.state).toBe("RUNNING");
    const final = await watch(api, store, run_id, (run) => run.state === "SUCCESS");
    expect(Object.values(final.task_instances).every((t) => t.state === "SUCCESS")).toBe(true);

    // the poller observed the progression, not a jump to the end
    expect(seenStates.has("RUNNING")).toBe(true);
    expect(final.config_text).toBe(body); // round-trip through the server, still verbatim
  });

  it("failed task retried from the console re-queues its downstream and succeeds", async () => {
    const api = client();
    const store = new RunStore();
    store.subscribe(() => {
      for (const state of store.heldStates()) {
        expect(delivered.has(state), `state ${state} was never delivered by the API`).toBe(true);
      }
    });

    await api.registerDag(FLAKY_DAG);
    const { run_id } = await api.triggerRun("shaky", configText("shaky"));

    const failed = await watch(api, store, run_id, (run) => run.state === "FAILED");
    expect(failed.task_instances["b"]?.state).toBe("FAILED");
    expect(failed.task_instances["c"]?.state).toBe("UPSTREAM_FAILED");

    const retried = await api.retryTask(run_id, "b");
    expect(retried.state).toBe("RUNNING");

    // b and its downstream left their failed states (re-queue coloring comes
    // straight from the API's state map)
    const { run: afterRetry } = await api.getRun(run_id);
    store.applyRun(afterRetry);
    for (const taskId of ["b", "c"]) {
      expect(["QUEUED", "RUNNING", "SUCCESS"]).toContain(afterRetry.task_instances[taskId]?.state);
    }

    const final = await watch(api, store, run_id, (run) => run.state === "SUCCESS");
    expect(final.task_instances["b"]?.attempt).toBe(2);
  });

  it("artifacts listing provides download URLs the server honors", async () => {
    const api = client();
    const { runs } = await api.listRuns({ state: "SUCCESS" });
    expect(runs.length).toBeGreaterThan(0);
    const runId = runs[0]!.run_id;
    const { artifacts } = await api.listArtifacts(runId);
    // compute/sleep dags export nothing, but the route contract still holds
    expect(Array.isArray(artifacts)).toBe(true);
    const url = api.artifactUrl(runId, "anything.txt");
    expect(url).toBe(`${baseUrl}/api/runs/${runId}/artifacts/anything.txt`);
  });
});
