/**
 * Training flow with PJND-before-clicks gating: the click phase stays
 * locked until the server accepts the reported threshold for the current
 * gold item. On a wrong threshold the machine surfaces the ground-truth
 * range and the heat-map overlay URL and keeps the participant on the
 * slider step.
 */

import { StudyApi, TrainingFeedback } from "./api.js";
import { Point, toSource } from "./coords.js";
import { CLICKS_REQUIRED } from "./trial.js";

export type TrainingPhase = "threshold" | "clicks" | "done";

/**
 * Placeholder coordinates for the threshold probe; the server withholds
 * click grading entirely while the threshold is wrong, and a correct
 * threshold unlocks the click step for a real submission.
 */
const PROBE_CLICKS: ReadonlyArray<readonly [number, number]> = [
  [0, 0],
  [0, 0],
  [0, 0],
];

export class TrainingMachine {
  private phase_: TrainingPhase = "threshold";
  private acceptedLevel: number | null = null;
  private readonly clicks_: Point[] = [];
  private lastFeedback_: TrainingFeedback | null = null;

  constructor(
    private readonly api: StudyApi,
    public readonly imageRef: string,
    private readonly displayScaleFactor: number,
  ) {}

  get phase(): TrainingPhase {
    return this.phase_;
  }

  get clicksLocked(): boolean {
    return this.phase_ !== "clicks";
  }

  /** Ground-truth range revealed after a wrong threshold, else null. */
  get shownRange(): [number, number] | null {
    return this.lastFeedback_?.gtRange ?? null;
  }

  get heatmapUrl(): string | null {
    return this.lastFeedback_?.heatmapUrl ?? null;
  }

  get clicks(): ReadonlyArray<readonly [number, number]> {
    return this.clicks_.map((c) => [c.x, c.y] as const);
  }

  /**
   * Report a threshold. Returns true when the server accepts it and the
   * click phase unlocks; false keeps the participant on the slider with
   * the ground truth displayed.
   */
  async submitThreshold(level: number): Promise<boolean> {
    if (this.phase_ !== "threshold") {
      throw new Error(`threshold already accepted (phase ${this.phase_})`);
    }
    const { training } = await this.api.qualificationResponse(
      this.imageRef,
      level,
      PROBE_CLICKS,
    );
    if (!training) throw new Error("expected training feedback");
    this.lastFeedback_ = training;
    if (training.pjndOk) {
      this.acceptedLevel = level;
      this.phase_ = "clicks";
      return true;
    }
    return false;
  }

  addClick(display: Point): void {
    if (this.clicksLocked) {
      throw new Error("click phase is locked until the threshold is accepted");
    }
    if (this.clicks_.length >= CLICKS_REQUIRED) return;
    this.clicks_.push(toSource(display, this.displayScaleFactor));
  }

  undoClick(): void {
    if (this.clicksLocked) {
      throw new Error("click phase is locked until the threshold is accepted");
    }
    this.clicks_.pop();
  }

  /**
   * Submit the three clicks with the accepted threshold. Returns true on
   * advance; false re-opens the click step with the heat map shown.
   */
  async submitClicks(): Promise<boolean> {
    if (this.phase_ !== "clicks" || this.acceptedLevel === null) {
      throw new Error("no accepted threshold to submit clicks for");
    }
    if (this.clicks_.length !== CLICKS_REQUIRED) {
      throw new Error(
        `need exactly ${CLICKS_REQUIRED} clicks, have ${this.clicks_.length}`,
      );
    }
    const { training } = await this.api.qualificationResponse(
      this.imageRef,
      this.acceptedLevel,
      this.clicks,
    );
    if (!training) throw new Error("expected training feedback");
    this.lastFeedback_ = training;
    if (training.advance) {
      this.phase_ = "done";
      return true;
    }
    this.clicks_.length = 0;
    return false;
  }
}
