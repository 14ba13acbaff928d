/**
 * The two-step flicker trial: (1) adjust a slider until flicker is just
 * visible in at least three regions, (2) click the three locations where
 * it shows. Clicks are kept in source-image coordinates (the inverse of
 * the display scale) and submission requires exactly three, with undo.
 */

import { Point, toSource } from "./coords.js";

export const CLICKS_REQUIRED = 3;
export const MARKER_SIZE_PX = 15; // green cross, drawn in display space

export type TrialPhase = "slider" | "clicks" | "done";

/** Slider-to-level is the identity: position p is the distortion level d. */
export function sliderToLevel(p: number): number {
  if (!Number.isFinite(p)) throw new RangeError(`slider position ${p}`);
  return Math.min(100, Math.max(0, Math.round(p)));
}

export interface TrialResult {
  level: number;
  clicks: ReadonlyArray<readonly [number, number]>;
}

export class TrialMachine {
  private phase_: TrialPhase = "slider";
  private level_ = 0;
  private readonly clicks_: Point[] = [];

  constructor(
    public readonly imageRef: string,
    private readonly displayScaleFactor: number,
  ) {
    if (!(displayScaleFactor > 0)) {
      throw new RangeError(`display scale must be positive, got ${displayScaleFactor}`);
    }
  }

  get phase(): TrialPhase {
    return this.phase_;
  }

  get level(): number {
    return this.level_;
  }

  /** At p = 0 both flicker frames are the source: no visible flicker. */
  get framePair(): { reference: number; distorted: number } {
    return { reference: 0, distorted: this.level_ };
  }

  /** Clicks in source-image coordinates, insertion order. */
  get clicks(): ReadonlyArray<readonly [number, number]> {
    return this.clicks_.map((c) => [c.x, c.y] as const);
  }

  get canSubmit(): boolean {
    return this.phase_ === "clicks" && this.clicks_.length === CLICKS_REQUIRED;
  }

  moveSlider(p: number): void {
    if (this.phase_ !== "slider") {
      throw new Error(`slider is locked in phase ${this.phase_}`);
    }
    this.level_ = sliderToLevel(p);
  }

  confirmLevel(): void {
    if (this.phase_ !== "slider") {
      throw new Error(`cannot confirm level in phase ${this.phase_}`);
    }
    this.phase_ = "clicks";
  }

  /** Record a click made at display coordinates; ignored beyond three. */
  addClick(display: Point): void {
    if (this.phase_ !== "clicks") {
      throw new Error(`clicks are not open in phase ${this.phase_}`);
    }
    if (this.clicks_.length >= CLICKS_REQUIRED) return;
    this.clicks_.push(toSource(display, this.displayScaleFactor));
  }

  undoClick(): void {
    if (this.phase_ !== "clicks") {
      throw new Error(`clicks are not open in phase ${this.phase_}`);
    }
    this.clicks_.pop();
  }

  finish(): TrialResult {
    if (!this.canSubmit) {
      throw new Error(
        `cannot submit with ${this.clicks_.length} of ${CLICKS_REQUIRED} clicks`,
      );
    }
    this.phase_ = "done";
    return { level: this.level_, clicks: this.clicks };
  }
}
