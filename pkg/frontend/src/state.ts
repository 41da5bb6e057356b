/** Per-case view state: slice cursors, the unsaved anchor draft, and the
 *  saved correspondence. The draft survives navigation until saved or
 *  explicitly discarded. */

import type { CaseSummary, Correspondence } from "./api.js";
import { anchorProblem, deriveMapping, type DerivedMapping } from "./mapping.js";

function clamp(i: number, n: number): number {
  if (n <= 0) return 0;
  return Math.min(Math.max(Math.trunc(i), 0), n - 1);
}

export class CaseView {
  readonly id: string;
  readonly nMicro: number;
  readonly nHistology: number;
  microIndex = 0;
  histIndex = 0;
  saved: Correspondence | null;
  draft: [number, number] | null = null;
  registered: boolean;
  lastError: string | null = null;

  constructor(summary: CaseSummary) {
    this.id = summary.id;
    this.nMicro = summary.n_micro;
    this.nHistology = summary.n_histology;
    this.saved = summary.correspondence;
    this.registered = summary.registered;
    if (this.saved) {
      this.histIndex = clamp(this.saved.anchor[0], this.nHistology);
      this.microIndex = clamp(this.saved.anchor[1], this.nMicro);
    }
  }

  setMicroIndex(i: number): number {
    this.microIndex = clamp(i, this.nMicro);
    return this.microIndex;
  }

  setHistIndex(i: number): number {
    this.histIndex = clamp(i, this.nHistology);
    return this.histIndex;
  }

  stepMicro(delta: number): number {
    return this.setMicroIndex(this.microIndex + delta);
  }

  stepHist(delta: number): number {
    return this.setHistIndex(this.histIndex + delta);
  }

  /** Take the currently browsed pair as the anchor draft. */
  draftFromCurrent(): [number, number] {
    this.draft = [this.histIndex, this.microIndex];
    return this.draft;
  }

  setDraft(h: number, m: number): void {
    this.draft = [h, m];
  }

  discardDraft(): void {
    this.draft = null;
  }

  /** Reason the draft cannot be saved, or null when it is valid. */
  draftProblem(): string | null {
    return anchorProblem(this.draft, this.nHistology, this.nMicro);
  }

  /** Mapping preview for the draft (or the saved anchor when no draft). */
  preview(histologySpacingMm = 3.0, microusSpacingMm = 1.0): DerivedMapping | null {
    const anchor = this.draft ?? this.saved?.anchor ?? null;
    if (!anchor || anchorProblem(anchor, this.nHistology, this.nMicro)) return null;
    return deriveMapping(anchor, this.nHistology, this.nMicro,
      this.saved && !this.draft ? this.saved.histology_spacing_mm : histologySpacingMm,
      this.saved && !this.draft ? this.saved.microus_spacing_mm : microusSpacingMm);
  }

  /** Apply the service's echo after a successful save. */
  applySaved(corr: Correspondence): void {
    this.saved = {
      anchor: corr.anchor,
      histology_spacing_mm: corr.histology_spacing_mm,
      microus_spacing_mm: corr.microus_spacing_mm,
    };
    this.draft = null;
    this.lastError = null;
  }
}
