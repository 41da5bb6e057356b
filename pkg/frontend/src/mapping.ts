/** Derived-mapping preview: the same arithmetic the service applies, shown
 *  before saving so the anchor choice's consequences are visible. */

import type { DroppedRow, MappingRow } from "./api.js";

export interface DerivedMapping {
  pairs: MappingRow[];
  dropped: DroppedRow[];
}

export function deriveMapping(
  anchor: [number, number],
  nHistology: number,
  nMicro: number,
  histologySpacingMm = 3.0,
  microusSpacingMm = 1.0,
): DerivedMapping {
  const [h0, m0] = anchor;
  const ratio = histologySpacingMm / microusSpacingMm;
  const pairs: MappingRow[] = [];
  const dropped: DroppedRow[] = [];
  for (let n = 0; n < nHistology; n++) {
    const d = m0 + ratio * (n - h0);
    const lo = Math.floor(d);
    const frac = d - lo;
    let m: number;
    if (Math.abs(frac - 0.5) < 1e-9) {
      m = d > m0 ? lo : lo + 1; // exact tie rounds toward the anchor
    } else {
      m = Math.round(d);
    }
    if (m >= 0 && m < nMicro) {
      pairs.push({ histology: n, micro: m });
    } else {
      dropped.push({ slice: n, micro_slice: m, reason: "out of micro range" });
    }
  }
  return { pairs, dropped };
}

export function anchorProblem(
  anchor: [number, number] | null,
  nHistology: number,
  nMicro: number,
): string | null {
  if (!anchor) return "no anchor selected";
  const [h, m] = anchor;
  if (!Number.isInteger(h) || h < 0 || h >= nHistology) {
    return `histology index ${h} outside [0, ${nHistology})`;
  }
  if (!Number.isInteger(m) || m < 0 || m >= nMicro) {
    return `micro index ${m} outside [0, ${nMicro})`;
  }
  return null;
}
