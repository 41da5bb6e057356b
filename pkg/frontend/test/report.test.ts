import { describe, expect, it } from "vitest";

import type { Report } from "../src/api.js";
import { formatCell, tableRows } from "../src/report.js";

const report: Report = {
  k: 2,
  means: {
    dice: 0.9822222222222221,
    hausdorff_mm: 0.895,
    urethra_deviation_mm: 0.1105,
    landmark_error_mm: null,
    n_dice: 2,
    n_hausdorff_mm: 2,
    n_urethra_deviation_mm: 2,
    n_landmark_error_mm: 0,
  },
  skipped: [],
  slices: [
    { slice: 0, micro_slice: 10, dice: 0.9781234567890123, hd_mm: 0.8, ud_mm: 0.1, le_mm: null },
    { slice: 1, micro_slice: 13, dice: 0.986321, hd_mm: 0.99, ud_mm: 0.121, le_mm: null },
  ],
};

describe("metrics table model", () => {
  it("passes service values through unchanged", () => {
    const rows = tableRows(report);
    expect(rows[0].dice).toBe(report.slices[0].dice);
    expect(rows[1].hd_mm).toBe(report.slices[1].hd_mm);
    const mean = rows[rows.length - 1];
    expect(mean.label).toBe("mean");
    expect(mean.dice).toBe(report.means.dice);
    expect(mean.hd_mm).toBe(report.means.hausdorff_mm);
    expect(mean.le_mm).toBeNull();
  });

  it("cell text is the exact decimal of the parsed JSON value", () => {
    // byte-for-byte against the parsed payload: String() of the same double
    expect(formatCell(0.9781234567890123)).toBe(String(0.9781234567890123));
    expect(formatCell(null)).toBe("—");
  });

  it("labels pairs as histology -> micro", () => {
    const rows = tableRows(report);
    expect(rows[0].label).toBe("h0 → m10");
  });
});
