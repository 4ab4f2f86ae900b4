/**
 * Status polling: a fixed 2 s cadence while things go well, exponential
 * backoff to 30 s while the API is unreachable, and at most one in-flight
 * poll per run.
 */

export const POLL_INTERVAL_MS = 2000;
export const POLL_BACKOFF_MAX_MS = 30000;

export function nextDelay(current: number): number {
  return Math.min(current * 2, POLL_BACKOFF_MAX_MS);
}

export interface PollerOptions {
  intervalMs?: number;
  setTimer?: typeof setTimeout;
  clearTimer?: typeof clearTimeout;
}

/** Repeatedly runs `tick` until stopped; `tick` returns false to stop. */
export class Poller {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private delay: number;
  private readonly interval: number;
  private readonly setTimer: typeof setTimeout;
  private readonly clearTimer: typeof clearTimeout;
  private stopped = false;
  private inFlight = false;

  constructor(
    private readonly tick: () => Promise<boolean>,
    options: PollerOptions = {},
  ) {
    this.interval = options.intervalMs ?? POLL_INTERVAL_MS;
    this.delay = this.interval;
    this.setTimer = options.setTimer ?? setTimeout;
    this.clearTimer = options.clearTimer ?? clearTimeout;
  }

  start(): void {
    this.stopped = false;
    void this.runOnce();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      this.clearTimer(this.timer);
      this.timer = null;
    }
  }

  get currentDelay(): number {
    return this.delay;
  }

  private async runOnce(): Promise<void> {
    if (this.stopped || this.inFlight) return;
    this.inFlight = true;
    let keepGoing = true;
    try {
      keepGoing = await this.tick();
      this.delay = this.interval; // healthy again: back to the fixed cadence
    } catch {
      this.delay = nextDelay(this.delay);
    } finally {
      this.inFlight = false;
    }
    if (keepGoing && !this.stopped) {
      this.timer = this.setTimer(() => void this.runOnce(), this.delay);
    }
  }
}

/** One poller per run id; asking again for a live run is a no-op. */
export class PollerRegistry {
  private pollers = new Map<string, Poller>();

  ensure(runId: string, make: () => Poller): Poller {
    const existing = this.pollers.get(runId);
    if (existing) return existing;
    const poller = make();
    this.pollers.set(runId, poller);
    poller.start();
    return poller;
  }

  stop(runId: string): void {
    this.pollers.get(runId)?.stop();
    this.pollers.delete(runId);
  }

  stopAll(): void {
    for (const runId of [...this.pollers.keys()]) this.stop(runId);
  }

  active(): string[] {
    return [...this.pollers.keys()];
  }
}
