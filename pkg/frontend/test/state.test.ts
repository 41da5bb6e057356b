import { describe, expect, it } from "vitest";

import type { CaseSummary } from "../src/api.js";
import { CaseView } from "../src/state.js";

function summary(over: Partial<CaseSummary> = {}): CaseSummary {
  return {
    id: "demo",
    n_micro: 53,
    n_histology: 12,
    correspondence: null,
    registered: false,
    report: null,
    busy: false,
    ...over,
  };
}

describe("slice browsing", () => {
  it("slider ranges cover [0, n-1] and scrolling clamps at the ends", () => {
    const v = new CaseView(summary());
    expect(v.setMicroIndex(52)).toBe(52);
    expect(v.stepMicro(1)).toBe(52); // clamped at the last index
    expect(v.setMicroIndex(-5)).toBe(0);
    expect(v.setHistIndex(11)).toBe(11);
    expect(v.stepHist(3)).toBe(11);
    expect(v.stepHist(-100)).toBe(0);
  });
});

describe("anchor draft", () => {
  it("draft survives navigation until saved or discarded", () => {
    const v = new CaseView(summary());
    v.setHistIndex(3);
    v.setMicroIndex(20);
    v.draftFromCurrent();
    v.setMicroIndex(40);
    v.setHistIndex(7);
    expect(v.draft).toEqual([3, 20]);
    v.discardDraft();
    expect(v.draft).toBeNull();
  });

  it("out-of-range draft is rejected with a reason and save stays disabled", () => {
    const v = new CaseView(summary());
    v.setDraft(3, 999);
    expect(v.draftProblem()).toMatch(/micro index 999/);
    expect(v.preview()).toBeNull();
  });

  it("valid draft previews the pending mapping", () => {
    const v = new CaseView(summary());
    v.setDraft(3, 20);
    const preview = v.preview();
    expect(preview?.pairs).toContainEqual({ histology: 4, micro: 23 });
  });

  it("a saved correspondence round trip restores the anchor after reload", () => {
    const v = new CaseView(summary());
    v.setDraft(3, 20);
    // service echo after PUT
    v.applySaved({ anchor: [3, 20], histology_spacing_mm: 3.0, microus_spacing_mm: 1.0 });
    expect(v.draft).toBeNull();
    expect(v.saved?.anchor).toEqual([3, 20]);
    // "reload": a fresh view built from the GET /api/cases/{id} summary
    const reloaded = new CaseView(summary({
      correspondence: { anchor: [3, 20], histology_spacing_mm: 3.0, microus_spacing_mm: 1.0 },
    }));
    expect(reloaded.saved?.anchor).toEqual([3, 20]);
    expect(reloaded.preview()?.pairs).toContainEqual({ histology: 4, micro: 23 });
  });
});
