import { describe, expect, it, vi } from "vitest";

import { POLL_BACKOFF_MAX_MS, POLL_INTERVAL_MS, Poller, PollerRegistry, nextDelay } from "../src/poller";

describe("backoff schedule", () => {
  it("doubles from the base interval and caps at 30 s", () => {
    const delays = [POLL_INTERVAL_MS];
    for (let i = 0; i < 6; i++) delays.push(nextDelay(delays[delays.length - 1]!));
    expect(delays).toEqual([2000, 4000, 8000, 16000, 30000, 30000, 30000]);
    expect(POLL_BACKOFF_MAX_MS).toBe(30000);
  });
});

describe("poller", () => {
  it("polls at the fixed cadence while ticks succeed", async () => {
    vi.useFakeTimers();
    let ticks = 0;
    const poller = new Poller(async () => {
      ticks += 1;
      return true;
    });
    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    expect(ticks).toBe(1);
    await vi.advanceTimersByTimeAsync(2000);
    expect(ticks).toBe(2);
    expect(poller.currentDelay).toBe(2000);
    poller.stop();
    vi.useRealTimers();
  });

  it("backs off on failures and recovers on success", async () => {
    vi.useFakeTimers();
    let failures = 3;
    const poller = new Poller(async () => {
      if (failures > 0) {
        failures -= 1;
        throw new Error("api unreachable");
      }
      return true;
    });
    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    expect(poller.currentDelay).toBe(4000); // first failure: 2000 -> 4000
    await vi.advanceTimersByTimeAsync(4000);
    expect(poller.currentDelay).toBe(8000);
    await vi.advanceTimersByTimeAsync(8000);
    expect(poller.currentDelay).toBe(16000);
    await vi.advanceTimersByTimeAsync(16000); // succeeds now
    expect(poller.currentDelay).toBe(2000);
    poller.stop();
    vi.useRealTimers();
  });

  it("a tick returning false ends the loop", async () => {
    vi.useFakeTimers();
    let ticks = 0;
    const poller = new Poller(async () => {
      ticks += 1;
      return false;
    });
    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    await vi.advanceTimersByTimeAsync(60000);
    expect(ticks).toBe(1);
    vi.useRealTimers();
  });
});

describe("poller registry", () => {
  it("deduplicates concurrent polls per run id", async () => {
    vi.useFakeTimers();
    const registry = new PollerRegistry();
    let made = 0;
    const make = () =>
      new Poller(async () => {
        return true;
      });
    const first = registry.ensure("run-1", () => {
      made += 1;
      return make();
    });
    const second = registry.ensure("run-1", () => {
      made += 1;
      return make();
    });
    expect(made).toBe(1);
    expect(second).toBe(first);
    expect(registry.active()).toEqual(["run-1"]);
    registry.stopAll();
    expect(registry.active()).toEqual([]);
    vi.useRealTimers();
  });
});
