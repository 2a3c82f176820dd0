import { describe, expect, test } from "vitest";
import {
  defaultTotalFrames,
  expandIndices,
  framePlan,
  presetFrameIndices,
  sliderSpan,
  subsampleIndices,
} from "../src/frames";

// Expected vectors below were computed with the server-side implementation
// and frozen here; any drift means the scrubber no longer matches exports.

describe("subsampleIndices", () => {
  test("half-up rounding, endpoints always kept", () => {
    expect(subsampleIndices(23, 9)).toEqual([0, 2, 5, 7, 10, 12, 15, 17, 20, 22]);
    expect(subsampleIndices(10, 9)).toEqual([0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    expect(subsampleIndices(2, 1)).toEqual([0, 1]);
  });

  test("upsampling duplicates interior indices", () => {
    expect(subsampleIndices(4, 6)).toEqual([0, 1, 1, 2, 2, 3, 3]);
  });

  test("rejects degenerate arguments", () => {
    expect(() => subsampleIndices(5, 0)).toThrow(RangeError);
    expect(() => subsampleIndices(0, 3)).toThrow(RangeError);
  });
});

describe("expandIndices", () => {
  test("repeats every step, truncated last block", () => {
    expect(expandIndices(3, 2, 5)).toEqual([0, 0, 1, 1, 2]);
    expect(expandIndices(1, 5, 4)).toEqual([0, 0, 0, 0]);
  });

  test("infeasible totals are an error, not a stretch", () => {
    expect(() => expandIndices(10, 5, 60)).toThrow(RangeError);
    expect(() => expandIndices(10, 5, 44)).toThrow(RangeError);
  });
});

describe("presetFrameIndices", () => {
  test("long path at (5, 49)", () => {
    const plan = presetFrameIndices(23, 5, 49);
    expect(plan).toHaveLength(49);
    expect(plan.slice(0, 12)).toEqual([0, 0, 0, 0, 0, 2, 2, 2, 2, 2, 5, 5]);
    expect(plan.slice(-4)).toEqual([22, 22, 22, 22]);
  });

  test("exact-length path: 10 images fill (5, 49), last image short a frame", () => {
    const plan = presetFrameIndices(10, 5, 49);
    expect(plan).toHaveLength(49);
    const counts = new Map<number, number>();
    for (const idx of plan) counts.set(idx, (counts.get(idx) ?? 0) + 1);
    for (let i = 0; i < 9; i++) expect(counts.get(i)).toBe(5);
    expect(counts.get(9)).toBe(4);
    expect(plan[0]).toBe(0);
  });

  test("short paths cannot fill the preset", () => {
    expect(() => presetFrameIndices(4, 5, 49)).toThrow(/cannot fill/);
    expect(() => presetFrameIndices(9, 5, 49)).toThrow(RangeError);
  });
});

describe("defaultTotalFrames", () => {
  test("one short of a full last block, floor of 1", () => {
    expect(defaultTotalFrames(4, 5)).toBe(19);
    expect(defaultTotalFrames(10, 5)).toBe(49);
    expect(defaultTotalFrames(1, 1)).toBe(1);
  });
});

describe("sliderSpan and framePlan", () => {
  test("10-image path spans the full 49-frame preset", () => {
    expect(sliderSpan(10)).toBe(49);
    expect(framePlan(10)).toHaveLength(49);
  });

  test("shorter paths fall back to their canonical length", () => {
    expect(sliderSpan(4)).toBe(19);
    expect(framePlan(4)).toHaveLength(19);
    expect(sliderSpan(1)).toBe(4);
    expect(framePlan(1)).toEqual([0, 0, 0, 0]);
  });

  test("position 0 always shows the path root", () => {
    for (const count of [1, 2, 4, 10, 23]) {
      expect(framePlan(count)[0]).toBe(0);
    }
  });

  test("plans are non-decreasing and stay inside the path", () => {
    for (const count of [2, 3, 7, 10, 15, 30]) {
      const plan = framePlan(count);
      expect(plan).toHaveLength(sliderSpan(count));
      for (let i = 0; i < plan.length; i++) {
        expect(plan[i]).toBeGreaterThanOrEqual(0);
        expect(plan[i]).toBeLessThan(count);
        if (i > 0) expect(plan[i]).toBeGreaterThanOrEqual(plan[i - 1]);
      }
      expect(plan[plan.length - 1]).toBe(count - 1);
    }
  });
});
