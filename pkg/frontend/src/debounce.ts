/**
 * Latest-wins request scheduling for slider drags.
 *
 * Invariants: at most one task in flight; bursts collapse to the newest
 * value; the trailing value is always executed; consecutive starts are at
 * least `minIntervalMs` apart (default caps at 10 requests per second).
 */

export type Runner<T> = (value: T) => Promise<void>;

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class LatestWinsQueue<T> {
  private pending: { value: T } | null = null;
  private running = false;
  private lastStart = -Infinity;
  private waiters: Array<() => void> = [];

  constructor(private runner: Runner<T>, private minIntervalMs = 100,
              private now: () => number = () => Date.now()) {}

  /** Schedule a value; replaces any not-yet-started value. */
  push(value: T): void {
    this.pending = { value };
    void this.drain();
  }

  /** Resolves once nothing is pending or in flight (test hook). */
  idle(): Promise<void> {
    if (!this.running && this.pending === null) return Promise.resolve();
    return new Promise((resolve) => this.waiters.push(resolve));
  }

  get busy(): boolean {
    return this.running || this.pending !== null;
  }

  private async drain(): Promise<void> {
    if (this.running) return;
    this.running = true;
    try {
      while (this.pending !== null) {
        const wait = this.lastStart + this.minIntervalMs - this.now();
        if (wait > 0) await sleep(wait);
        const item = this.pending;
        if (item === null) continue;
        this.pending = null;
        this.lastStart = this.now();
        try {
          await this.runner(item.value);
        } catch {
          // the runner reports its own errors; scheduling must survive them
        }
      }
    } finally {
      this.running = false;
      const waiters = this.waiters;
      this.waiters = [];
      waiters.forEach((w) => w());
    }
  }
}
