import { describe, expect, it } from "vitest";

import {
  ETA_BOUND,
  etaBadgeClass,
  formatAlphaDeg,
  formatEta,
  formatNrmse,
  formatObjective,
  formatSlope,
} from "../src/format";
import { divergingColor, fieldColors, sequentialColor } from "../src/overlays";

describe("badge formatting", () => {
  it("shows eta at four decimals", () => {
    expect(formatEta(1)).toBe("1.0000");
    expect(formatEta(1.00154)).toBe("1.0015");
  });

  it("flags eta above the coverage bound", () => {
    expect(etaBadgeClass(1.0)).toBe("badge-ok");
    expect(etaBadgeClass(ETA_BOUND)).toBe("badge-ok");
    expect(etaBadgeClass(1.002)).toBe("badge-bad");
    // a boundary peak is the degenerate-coverage escape, not a failure
    expect(etaBadgeClass(1.002, true)).toBe("badge-ok");
  });

  it("formats slopes, objectives, angles and NRMSE", () => {
    expect(formatSlope(0.98765)).toBe("0.988");
    expect(formatObjective(0.001234567)).toBe("0.00123457");
    expect(formatAlphaDeg(Math.PI / 2)).toBe("90.0°");
    expect(formatNrmse(0.004691)).toBe("4.691e-3");
  });
});

describe("overlay colors", () => {
  it("diverging map is blue negative, red positive, white at zero", () => {
    expect(divergingColor(0)).toEqual([1, 1, 1]);
    const neg = divergingColor(-1);
    const pos = divergingColor(1);
    expect(neg[2]).toBe(1);
    expect(neg[0]).toBe(0);
    expect(pos[0]).toBe(1);
    expect(pos[2]).toBe(0);
  });

  it("sequential map is monotone in all channels' brightness", () => {
    const lo = sequentialColor(0);
    const hi = sequentialColor(1);
    expect(hi[0]).toBeGreaterThan(lo[0]);
    expect(hi[1]).toBeGreaterThan(lo[1]);
  });

  it("fieldColors normalizes symmetrically for signed fields", () => {
    const colors = fieldColors([-2, 0, 2], true);
    expect(colors.length).toBe(9);
    // -2 maps to full blue, +2 to full red, 0 to white
    expect(colors[2]).toBeCloseTo(1, 12);
    expect(colors[0]).toBeCloseTo(0, 12);
    expect(Array.from(colors.slice(3, 6))).toEqual([1, 1, 1]);
    expect(colors[6]).toBeCloseTo(1, 12);
    expect(colors[8]).toBeCloseTo(0, 12);
  });

  it("fieldColors survives constant fields", () => {
    const colors = fieldColors([3, 3, 3], false);
    for (let i = 0; i < 9; i++) {
      expect(Number.isFinite(colors[i])).toBe(true);
    }
  });
});
