/** Metrics-table model: values pass through from the service report
 *  verbatim (the UI is display-only and never recomputes). */

import type { Report } from "./api.js";

export interface TableRow {
  label: string;
  dice: number | null;
  hd_mm: number | null;
  ud_mm: number | null;
  le_mm: number | null;
}

export function tableRows(report: Report): TableRow[] {
  const rows: TableRow[] = report.slices.map((s) => ({
    label: s.micro_slice === null ? `h${s.slice}` : `h${s.slice} → m${s.micro_slice}`,
    dice: s.dice,
    hd_mm: s.hd_mm,
    ud_mm: s.ud_mm,
    le_mm: s.le_mm,
  }));
  rows.push({
    label: "mean",
    dice: report.means.dice,
    hd_mm: report.means.hausdorff_mm,
    ud_mm: report.means.urethra_deviation_mm,
    le_mm: report.means.landmark_error_mm,
  });
  return rows;
}

export function formatCell(v: number | null): string {
  return v === null ? "—" : String(v);
}
