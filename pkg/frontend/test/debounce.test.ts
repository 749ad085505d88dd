import { describe, expect, it } from "vitest";

import { LatestWinsQueue } from "../src/debounce.js";

const tick = () => new Promise<void>((r) => setTimeout(r, 0));

describe("LatestWinsQueue", () => {
  it("runs a single pushed value", async () => {
    const seen: number[] = [];
    const q = new LatestWinsQueue<number>(async (v) => { seen.push(v); }, 0);
    q.push(7);
    await q.idle();
    expect(seen).toEqual([7]);
  });

  it("collapses a burst to first-in-flight plus the trailing value", async () => {
    const seen: number[] = [];
    let release!: () => void;
    const gate = new Promise<void>((r) => { release = r; });
    const q = new LatestWinsQueue<number>(async (v) => {
      seen.push(v);
      if (seen.length === 1) await gate;  // hold the first request in flight
    }, 0);
    for (let i = 0; i < 20; i++) q.push(i);
    await tick();
    expect(seen).toEqual([0]);  // only one in flight
    release();
    await q.idle();
    expect(seen).toEqual([0, 19]);  // intermediates dropped, trailing ran
  });

  it("never overlaps runs", async () => {
    let inFlight = 0;
    let maxInFlight = 0;
    const q = new LatestWinsQueue<number>(async () => {
      inFlight += 1;
      maxInFlight = Math.max(maxInFlight, inFlight);
      await tick();
      inFlight -= 1;
    }, 0);
    for (let i = 0; i < 10; i++) {
      q.push(i);
      await tick();
    }
    await q.idle();
    expect(maxInFlight).toBe(1);
  });

  it("caps the request rate via the minimum start interval", async () => {
    const starts: number[] = [];
    let now = 0;
    const q = new LatestWinsQueue<number>(async (v) => { starts.push(now); }, 100,
                                          () => now);
    // simulated clock: every setTimeout advances it by the requested delay
    const realSetTimeout = globalThis.setTimeout;
    (globalThis as any).setTimeout = (fn: () => void, ms?: number) => {
      now += ms ?? 0;
      return realSetTimeout(fn, 0);
    };
    try {
      q.push(1);
      await q.idle();
      q.push(2);
      await q.idle();
      q.push(3);
      await q.idle();
    } finally {
      (globalThis as any).setTimeout = realSetTimeout;
    }
    for (let i = 1; i < starts.length; i++) {
      expect(starts[i] - starts[i - 1]).toBeGreaterThanOrEqual(100);
    }
  });

  it("keeps scheduling after a runner failure", async () => {
    const seen: number[] = [];
    const q = new LatestWinsQueue<number>(async (v) => {
      if (v === 1) throw new Error("boom");
      seen.push(v);
    }, 0);
    q.push(1);
    await q.idle();
    q.push(2);
    await q.idle();
    expect(seen).toEqual([2]);
  });
});
