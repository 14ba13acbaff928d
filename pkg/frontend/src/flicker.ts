/**
 * The 8 Hz flicker loop: the reference frame and the distorted frame at
 * the current slider level alternate every 125 ms at the identical screen
 * position. Exactly one frame is visible at any instant.
 *
 * The loop is driven by a monotonic timer with drift-free scheduling (each
 * swap is planned at start + n * interval, not previous + interval), and
 * it only ever toggles visibility of already-decoded frames: nothing in
 * the loop may hit the network.
 */

export const SWAP_INTERVAL_MS = 125;

/** A swap later than this while frames are cached counts as a stall. */
export const MAX_SWAP_GAP_MS = 250;

export type Phase = "reference" | "distorted";

export interface FlickerClock {
  now(): number;
  setTimeout(fn: () => void, ms: number): unknown;
  clearTimeout(handle: unknown): void;
}

const systemClock: FlickerClock = {
  now: () => Date.now(),
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (handle) => clearTimeout(handle as Parameters<typeof clearTimeout>[0]),
};

export interface SwapEvent {
  phase: Phase;
  at: number;
}

export class FlickerLoop {
  private readonly clock: FlickerClock;
  private phase: Phase = "reference";
  private startedAt: number | null = null;
  private ticks = 0;
  private handle: unknown = null;
  private readonly swaps: SwapEvent[] = [];
  private onSwap: ((event: SwapEvent) => void) | null = null;

  constructor(clock: FlickerClock = systemClock) {
    this.clock = clock;
  }

  /** The single currently visible frame; never both. */
  get visible(): Phase {
    return this.phase;
  }

  get running(): boolean {
    return this.startedAt !== null;
  }

  get swapCount(): number {
    return this.swaps.length;
  }

  get swapLog(): readonly SwapEvent[] {
    return this.swaps;
  }

  start(onSwap?: (event: SwapEvent) => void): void {
    if (this.running) return;
    this.onSwap = onSwap ?? null;
    this.phase = "reference";
    this.ticks = 0;
    this.swaps.length = 0;
    this.startedAt = this.clock.now();
    this.scheduleNext();
  }

  stop(): void {
    if (this.handle !== null) {
      this.clock.clearTimeout(this.handle);
      this.handle = null;
    }
    this.startedAt = null;
    this.phase = "reference";
  }

  private scheduleNext(): void {
    if (this.startedAt === null) return;
    const target = this.startedAt + (this.ticks + 1) * SWAP_INTERVAL_MS;
    const delay = Math.max(0, target - this.clock.now());
    this.handle = this.clock.setTimeout(() => this.tick(), delay);
  }

  private tick(): void {
    if (this.startedAt === null) return;
    this.ticks += 1;
    this.phase = this.phase === "reference" ? "distorted" : "reference";
    const event: SwapEvent = { phase: this.phase, at: this.clock.now() };
    this.swaps.push(event);
    this.onSwap?.(event);
    this.scheduleNext();
  }
}

/**
 * Levels to keep decoded around the current slider position so moving the
 * slider never fetches inside the swap loop.
 */
export function prefetchLevels(
  current: number,
  window: number = 5,
  lo: number = 0,
  hi: number = 100,
): number[] {
  const levels: number[] = [];
  for (let d = Math.max(lo, current - window); d <= Math.min(hi, current + window); d++) {
    levels.push(d);
  }
  return levels;
}
