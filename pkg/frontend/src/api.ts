/** Typed client for the case service. All numbers displayed in the UI come
 *  from these responses untouched; the frontend never computes metrics. */

export interface Correspondence {
  anchor: [number, number];
  histology_spacing_mm: number;
  microus_spacing_mm: number;
}

export interface MappingRow {
  histology: number;
  micro: number;
}

export interface DroppedRow {
  slice: number;
  micro_slice: number;
  reason: string;
}

export interface CorrespondenceSaved extends Correspondence {
  mapping: MappingRow[];
  dropped: DroppedRow[];
}

export interface ReportMeans {
  dice: number | null;
  hausdorff_mm: number | null;
  urethra_deviation_mm: number | null;
  landmark_error_mm: number | null;
  n_dice: number;
  n_hausdorff_mm: number;
  n_urethra_deviation_mm: number;
  n_landmark_error_mm: number;
}

export interface ReportSlice {
  slice: number;
  micro_slice: number | null;
  dice: number;
  hd_mm: number;
  ud_mm: number | null;
  le_mm: number | null;
}

export interface Report {
  k: number;
  means: ReportMeans;
  skipped: { slice: number; micro_slice: number; reason: string }[];
  slices: ReportSlice[];
}

export interface CaseSummary {
  id: string;
  n_micro: number;
  n_histology: number;
  correspondence: Correspondence | null;
  registered: boolean;
  report: Report | null;
  busy: boolean;
}

export interface RegisterResult {
  status: string;
  k: number;
  means: ReportMeans;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

function detailOf(body: unknown): string {
  if (body && typeof body === "object" && "detail" in body) {
    const d = (body as { detail: unknown }).detail;
    if (typeof d === "string") return d;
    if (Array.isArray(d)) {
      return d.map((e) => (e && typeof e === "object" && "msg" in e
        ? String((e as { msg: unknown }).msg) : JSON.stringify(e))).join("; ");
    }
  }
  return JSON.stringify(body);
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  let body: unknown = null;
  try {
    body = await resp.json();
  } catch {
    body = null;
  }
  if (!resp.ok) {
    throw new ApiError(resp.status, detailOf(body));
  }
  return body as T;
}

export class Client {
  constructor(private base: string = "") {}

  listCases(): Promise<string[]> {
    return request(`${this.base}/api/cases`);
  }

  getCase(id: string): Promise<CaseSummary> {
    return request(`${this.base}/api/cases/${id}`);
  }

  getCorrespondence(id: string): Promise<Correspondence> {
    return request(`${this.base}/api/cases/${id}/correspondence`);
  }

  putCorrespondence(id: string, body: {
    anchor: [number, number];
    histology_spacing_mm?: number;
    microus_spacing_mm?: number;
  }): Promise<CorrespondenceSaved> {
    return request(`${this.base}/api/cases/${id}/correspondence`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  register(id: string): Promise<RegisterResult> {
    return request(`${this.base}/api/cases/${id}/register`, { method: "POST" });
  }

  getReport(id: string): Promise<Report> {
    return request(`${this.base}/api/cases/${id}/report`);
  }

  microSliceUrl(id: string, k: number): string {
    return `${this.base}/api/cases/${id}/microus/slices/${k}.png`;
  }

  histologySliceUrl(id: string, n: number): string {
    return `${this.base}/api/cases/${id}/histology/${n}.png`;
  }

  overlayUrl(id: string, n: number): string {
    return `${this.base}/api/cases/${id}/overlays/${n}.png`;
  }
}
