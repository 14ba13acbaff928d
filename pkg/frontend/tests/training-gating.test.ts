/**
 * End-to-end qualification flow against a real backend: a throwaway study
 * server is spawned as a subprocess and the training machine drives it
 * over HTTP. Verifies the PJND-before-clicks gating and the full path
 * from calibration through quiz pass to a first HIT.
 */

import { ChildProcess, spawn } from "node:child_process";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { StudyApi } from "../src/api.js";
import { completeCalibration } from "../src/calibration.js";
import { TrainingMachine } from "../src/training.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const GOOD_LEVEL = 40; // inside the fixture gold range (36, 44)
const WRONG_LEVEL = 90;
const CENTER_CLICKS: Array<[number, number]> = [
  [60, 60],
  [200, 60],
  [130, 200],
];

let server: ChildProcess;
let baseUrl: string;

beforeAll(async () => {
  server = spawn("python3", [join(HERE, "helpers", "serve_study.py")], {
    stdio: ["ignore", "pipe", "inherit"],
  });
  const port = await new Promise<number>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("server start timeout")), 30000);
    server.stdout!.on("data", (chunk: Buffer) => {
      const match = /READY (\d+)/.exec(chunk.toString());
      if (match) {
        clearTimeout(timer);
        resolve(Number(match[1]));
      }
    });
    server.on("exit", (code) => reject(new Error(`server exited early: ${code}`)));
  });
  baseUrl = `http://127.0.0.1:${port}`;
  for (let i = 0; i < 100; i++) {
    try {
      const r = await fetch(`${baseUrl}/v1/healthz`);
      if (r.ok) return;
    } catch {
      // not listening yet
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  throw new Error("server never became healthy");
}, 40000);

afterAll(() => {
  server?.kill();
});

async function qualificationItem(api: StudyApi) {
  const next = await api.qualificationNext();
  if (!("imageRef" in next)) throw new Error("expected a qualification item");
  return next;
}

describe("training gating against a live server", () => {
  it("keeps the click phase unreachable until the PJND is accepted", async () => {
    const api = new StudyApi(baseUrl);
    const calibration = completeCalibration(323, true);
    await api.createSession("worker-gating", calibration.ppi, true);

    const item = await qualificationItem(api);
    expect(item.phase).toBe("training");
    const training = new TrainingMachine(api, item.imageRef, 1.0);

    // clicks locked from the start
    expect(training.clicksLocked).toBe(true);
    expect(() => training.addClick({ x: 60, y: 60 })).toThrow(/locked/);

    // a wrong threshold keeps them locked and reveals the ground truth
    expect(await training.submitThreshold(WRONG_LEVEL)).toBe(false);
    expect(training.clicksLocked).toBe(true);
    expect(training.shownRange).toEqual([36, 44]);
    expect(training.heatmapUrl).toContain("/v1/qualification/heatmap/");
    expect(() => training.addClick({ x: 60, y: 60 })).toThrow(/locked/);

    // the revealed heat map is actually servable
    const heat = await fetch(`${baseUrl}${training.heatmapUrl}`);
    expect(heat.status).toBe(200);
    expect(heat.headers.get("content-type")).toBe("image/png");

    // a threshold inside the range unlocks the click phase
    expect(await training.submitThreshold(GOOD_LEVEL)).toBe(true);
    expect(training.clicksLocked).toBe(false);
    for (const [x, y] of CENTER_CLICKS) training.addClick({ x, y });
    expect(await training.submitClicks()).toBe(true);
    expect(training.phase).toBe("done");

    // the same item is not served again
    const after = await qualificationItem(api);
    expect(after.imageRef).not.toBe(item.imageRef);
  }, 30000);

  it("runs training and quiz to qualification, then serves a HIT", async () => {
    const api = new StudyApi(baseUrl);
    await api.createSession("worker-full", 95.9, true);

    for (let guard = 0; guard < 40; guard++) {
      const next = await api.qualificationNext();
      if (!("imageRef" in next)) {
        expect(next.done).toBe(true);
        expect(next.passed).toBe(true);
        break;
      }
      if (next.phase === "training") {
        const machine = new TrainingMachine(api, next.imageRef, 1.0);
        await machine.submitThreshold(GOOD_LEVEL);
        for (const [x, y] of CENTER_CLICKS) machine.addClick({ x, y });
        await machine.submitClicks();
      } else {
        await api.qualificationResponse(next.imageRef, GOOD_LEVEL, CENTER_CLICKS);
      }
    }

    const hit = await api.hitNext();
    expect(hit.items).toHaveLength(11);
    // answer every item; the gold is indistinguishable client-side
    for (const [i, item] of hit.items.entries()) {
      const isLarge = item.width === 256;
      const result = await api.submitResponse(
        hit.hitId,
        item.imageRef,
        isLarge ? GOOD_LEVEL : 50,
        isLarge
          ? CENTER_CLICKS
          : [
              [10, 10],
              [20, 20],
              [30, 30],
            ],
        0,
        1,
      );
      expect(result.accepted).toBe(true);
      expect(result.hitComplete).toBe(i === hit.items.length - 1);
    }
  }, 30000);
});
