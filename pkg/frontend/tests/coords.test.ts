import { describe, expect, it } from "vitest";

import { displayScale, distance, toDisplay, toSource } from "../src/coords.js";

describe("coordinate round-trip", () => {
  const scales = [0.5, 1.0, 1.5, 2.0];

  it("returns the original source coordinate within 0.5 px", () => {
    let seed = 42;
    const rand = () => {
      // deterministic LCG so failures are reproducible
      seed = (seed * 1664525 + 1013904223) >>> 0;
      return seed / 2 ** 32;
    };
    for (const scale of scales) {
      for (let i = 0; i < 500; i++) {
        const p = { x: rand() * 1024, y: rand() * 1024 };
        const back = toSource(toDisplay(p, scale), scale);
        expect(distance(p, back)).toBeLessThanOrEqual(0.5);
      }
    }
  });

  it("inverse scaling matches the documented example", () => {
    // click at displayed (x, y) with scale 1.5 -> reported (x/1.5, y/1.5)
    const reported = toSource({ x: 300, y: 150 }, 1.5);
    expect(reported.x).toBeCloseTo(200, 9);
    expect(reported.y).toBeCloseTo(100, 9);
  });

  it("display scale follows the calibrated ppi", () => {
    expect(displayScale(96)).toBeCloseTo(1.0, 9);
    expect(displayScale(192)).toBeCloseTo(2.0, 9);
    expect(displayScale(48, 96)).toBeCloseTo(0.5, 9);
  });

  it("rejects non-positive scales", () => {
    expect(() => toDisplay({ x: 1, y: 1 }, 0)).toThrow(RangeError);
    expect(() => toSource({ x: 1, y: 1 }, -2)).toThrow(RangeError);
  });
});
