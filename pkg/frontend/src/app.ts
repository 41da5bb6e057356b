/** QA browser: side-by-side slice comparison, anchor picking with a derived
 *  mapping preview, registration trigger, and overlay review with a metrics
 *  table. Every displayed number comes from the service. */

import { ApiError, Client, type CaseSummary, type Report } from "./api.js";
import { CaseView } from "./state.js";
import {
  compositeOverlay,
  decomposeOverlay,
  LABEL_NAMES,
  type LabelLayers,
  type LabelName,
} from "./overlay.js";
import { formatCell, tableRows } from "./report.js";

const client = new Client();

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, cls?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function imagePane(title: string): {
  root: HTMLElement;
  img: HTMLImageElement;
  slider: HTMLInputElement;
  label: HTMLElement;
  setSource: (url: string) => void;
} {
  const root = el("div", "pane");
  root.appendChild(el("h3", undefined, title));
  const frame = el("div", "frame");
  const img = el("img");
  img.draggable = false;
  const errorBox = el("div", "image-error hidden");
  const retry = el("button", undefined, "retry");
  errorBox.appendChild(el("span", undefined, "failed to load slice "));
  errorBox.appendChild(retry);
  frame.appendChild(img);
  frame.appendChild(errorBox);
  root.appendChild(frame);
  const controls = el("div", "pane-controls");
  const slider = el("input");
  slider.type = "range";
  slider.min = "0";
  slider.value = "0";
  const label = el("span", "index-label", "0 / 0");
  controls.appendChild(slider);
  controls.appendChild(label);
  root.appendChild(controls);

  let lastUrl = "";
  const setSource = (url: string) => {
    lastUrl = url;
    errorBox.classList.add("hidden");
    img.src = url;
  };
  img.onerror = () => {
    if (img.src) errorBox.classList.remove("hidden");
  };
  retry.onclick = () => setSource(lastUrl + (lastUrl.includes("?") ? "&" : "?") + "r=" + Date.now());
  return { root, img, slider, label, setSource };
}

class OverlayViewer {
  root = el("div", "overlay-viewer");
  private canvas = el("canvas");
  private opacity = el("input");
  private toggles = new Map<LabelName, HTMLInputElement>();
  private pairSelect = el("select");
  private status = el("div", "status");
  private base: ImageData | null = null;
  private layers: LabelLayers | null = null;
  private report: Report | null = null;
  private caseId = "";

  constructor() {
    const controls = el("div", "overlay-controls");
    controls.appendChild(el("span", undefined, "pair"));
    controls.appendChild(this.pairSelect);
    this.opacity.type = "range";
    this.opacity.min = "0";
    this.opacity.max = "100";
    this.opacity.value = "50";
    controls.appendChild(el("span", undefined, "opacity"));
    controls.appendChild(this.opacity);
    for (const name of LABEL_NAMES) {
      const box = el("input");
      box.type = "checkbox";
      box.checked = true;
      this.toggles.set(name, box);
      const lab = el("label", "toggle");
      lab.appendChild(box);
      lab.appendChild(document.createTextNode(name));
      controls.appendChild(lab);
      box.onchange = () => this.redraw();
    }
    this.opacity.oninput = () => this.redraw();
    this.pairSelect.onchange = () => void this.loadPair();
    this.root.appendChild(controls);
    this.root.appendChild(this.canvas);
    this.root.appendChild(this.status);
  }

  async show(caseId: string, report: Report): Promise<void> {
    this.caseId = caseId;
    this.report = report;
    this.pairSelect.textContent = "";
    for (const s of report.slices) {
      const opt = el("option", undefined, `h${s.slice} → m${s.micro_slice}`);
      opt.value = String(s.slice);
      this.pairSelect.appendChild(opt);
    }
    await this.loadPair();
  }

  private async loadPair(): Promise<void> {
    if (!this.report) return;
    const n = Number(this.pairSelect.value || this.report.slices[0]?.slice ?? 0);
    const rec = this.report.slices.find((s) => s.slice === n);
    if (!rec || rec.micro_slice === null) return;
    try {
      const [base, over] = await Promise.all([
        loadRgba(client.microSliceUrl(this.caseId, rec.micro_slice)),
        loadRgba(client.overlayUrl(this.caseId, n)),
      ]);
      this.base = base;
      this.layers = decomposeOverlay(base.data, over.data, base.width * base.height);
      this.canvas.width = base.width;
      this.canvas.height = base.height;
      this.status.textContent = "";
      this.redraw();
    } catch (e) {
      this.status.textContent = `overlay unavailable: ${e instanceof Error ? e.message : e}`;
    }
  }

  private redraw(): void {
    if (!this.base || !this.layers) return;
    const toggles = {
      cancer: this.toggles.get("cancer")!.checked,
      prostate: this.toggles.get("prostate")!.checked,
    };
    const out = compositeOverlay(this.base.data, this.layers,
      Number(this.opacity.value) / 100, toggles);
    const ctx = this.canvas.getContext("2d")!;
    ctx.putImageData(new ImageData(out, this.base.width, this.base.height), 0, 0);
  }
}

async function loadRgba(url: string): Promise<ImageData> {
  const img = new Image();
  img.src = url;
  await img.decode();
  const canvas = document.createElement("canvas");
  canvas.width = img.naturalWidth;
  canvas.height = img.naturalHeight;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(img, 0, 0);
  return ctx.getImageData(0, 0, canvas.width, canvas.height);
}

function metricsTable(report: Report): HTMLElement {
  const table = el("table", "metrics");
  const head = el("tr");
  for (const h of ["pair", "dice", "hd (mm)", "ud (mm)", "le (mm)"]) {
    head.appendChild(el("th", undefined, h));
  }
  table.appendChild(head);
  for (const row of tableRows(report)) {
    const tr = el("tr", row.label === "mean" ? "mean-row" : undefined);
    tr.appendChild(el("td", undefined, row.label));
    for (const v of [row.dice, row.hd_mm, row.ud_mm, row.le_mm]) {
      tr.appendChild(el("td", undefined, formatCell(v)));
    }
    table.appendChild(tr);
  }
  return table;
}

class CasePage {
  root = el("div", "case-page");
  private view: CaseView;
  private micro = imagePane("micro-US (axial)");
  private hist = imagePane("histology");
  private mappingBox = el("div", "mapping-box");
  private errorBox = el("div", "error hidden");
  private registerStatus = el("span", "status");
  private overlay = new OverlayViewer();
  private reportBox = el("div", "report-box");

  constructor(private summary: CaseSummary) {
    this.view = new CaseView(summary);
    this.build();
  }

  private build(): void {
    this.root.appendChild(el("h2", undefined, `case ${this.summary.id}`));
    const panes = el("div", "panes");
    panes.appendChild(this.micro.root);
    panes.appendChild(this.hist.root);
    this.root.appendChild(panes);

    this.micro.slider.max = String(Math.max(this.view.nMicro - 1, 0));
    this.hist.slider.max = String(Math.max(this.view.nHistology - 1, 0));
    this.micro.slider.oninput = () => {
      this.view.setMicroIndex(Number(this.micro.slider.value));
      this.refreshPanes();
    };
    this.hist.slider.oninput = () => {
      this.view.setHistIndex(Number(this.hist.slider.value));
      this.refreshPanes();
    };
    document.addEventListener("keydown", (ev) => {
      if (ev.key === "ArrowLeft" || ev.key === "ArrowRight") {
        const d = ev.key === "ArrowRight" ? 1 : -1;
        if (ev.shiftKey) this.view.stepHist(d);
        else this.view.stepMicro(d);
        this.refreshPanes();
      }
    });

    const anchorBar = el("div", "anchor-bar");
    const useBtn = el("button", undefined, "use current pair as anchor");
    const saveBtn = el("button", undefined, "save anchor");
    const discardBtn = el("button", undefined, "discard draft");
    anchorBar.appendChild(useBtn);
    anchorBar.appendChild(saveBtn);
    anchorBar.appendChild(discardBtn);
    const registerBtn = el("button", undefined, "run registration");
    anchorBar.appendChild(registerBtn);
    anchorBar.appendChild(this.registerStatus);
    this.root.appendChild(anchorBar);
    this.root.appendChild(this.errorBox);
    this.root.appendChild(this.mappingBox);
    this.root.appendChild(this.reportBox);
    this.root.appendChild(this.overlay.root);

    useBtn.onclick = () => {
      this.view.draftFromCurrent();
      this.refreshMapping();
    };
    discardBtn.onclick = () => {
      this.view.discardDraft();
      this.refreshMapping();
    };
    saveBtn.onclick = () => void this.saveDraft();
    registerBtn.onclick = () => void this.runRegistration();

    this.refreshPanes();
    this.refreshMapping();
    if (this.summary.report) {
      this.showReport(this.summary.report);
    } else {
      this.reportBox.textContent = "no report yet: pick an anchor and run registration";
    }
  }

  private refreshPanes(): void {
    this.micro.slider.value = String(this.view.microIndex);
    this.hist.slider.value = String(this.view.histIndex);
    this.micro.label.textContent = `${this.view.microIndex} / ${this.view.nMicro - 1}`;
    this.hist.label.textContent = `${this.view.histIndex} / ${this.view.nHistology - 1}`;
    this.micro.setSource(client.microSliceUrl(this.view.id, this.view.microIndex));
    this.hist.setSource(client.histologySliceUrl(this.view.id, this.view.histIndex));
  }

  private refreshMapping(): void {
    this.mappingBox.textContent = "";
    const draft = this.view.draft;
    const saved = this.view.saved;
    const title = draft
      ? `draft anchor: h${draft[0]} ↔ m${draft[1]} (unsaved)`
      : saved
        ? `saved anchor: h${saved.anchor[0]} ↔ m${saved.anchor[1]}`
        : "no anchor set";
    this.mappingBox.appendChild(el("h3", undefined, title));
    const problem = draft ? this.view.draftProblem() : null;
    if (problem) {
      this.mappingBox.appendChild(el("div", "error", `cannot save: ${problem}`));
      return;
    }
    const preview = this.view.preview();
    if (!preview) return;
    const list = el("div", "mapping-rows");
    for (const row of preview.pairs) {
      list.appendChild(el("span", "mapping-row", `h${row.histology} → m${row.micro}`));
    }
    for (const d of preview.dropped) {
      list.appendChild(el("span", "mapping-row dropped",
        `h${d.slice} dropped (${d.reason})`));
    }
    this.mappingBox.appendChild(list);
  }

  private async saveDraft(): Promise<void> {
    const draft = this.view.draft;
    const problem = this.view.draftProblem();
    this.errorBox.classList.add("hidden");
    if (!draft || problem) {
      this.showError(problem ?? "nothing to save");
      return;
    }
    try {
      const saved = await client.putCorrespondence(this.view.id, { anchor: draft });
      this.view.applySaved(saved);
      this.refreshMapping();
    } catch (e) {
      // validation failures keep the draft so the user can fix it
      this.showError(e instanceof ApiError ? e.detail : String(e));
      this.refreshMapping();
    }
  }

  private async runRegistration(): Promise<void> {
    this.registerStatus.textContent = "running…";
    try {
      await client.register(this.view.id);
      const report = await client.getReport(this.view.id);
      this.registerStatus.textContent = "completed";
      this.showReport(report);
    } catch (e) {
      if (e instanceof ApiError && e.status === 409) {
        this.registerStatus.textContent = "busy: a registration is already running";
      } else {
        this.registerStatus.textContent = e instanceof ApiError ? e.detail : String(e);
      }
    }
  }

  private showReport(report: Report): void {
    this.reportBox.textContent = "";
    this.reportBox.appendChild(metricsTable(report));
    void this.overlay.show(this.view.id, report);
  }

  private showError(message: string): void {
    this.errorBox.textContent = message;
    this.errorBox.classList.remove("hidden");
  }
}

async function route(): Promise<void> {
  const main = document.getElementById("main")!;
  main.textContent = "";
  const caseId = window.location.hash.replace(/^#\/?/, "");
  if (!caseId) {
    const cases = await client.listCases();
    const list = el("div", "case-list");
    list.appendChild(el("h2", undefined, "cases"));
    for (const id of cases) {
      const a = el("a", "case-link", id);
      a.href = `#/${id}`;
      list.appendChild(a);
    }
    if (!cases.length) list.appendChild(el("p", undefined, "no cases found"));
    main.appendChild(list);
    return;
  }
  try {
    const summary = await client.getCase(caseId);
    main.appendChild(new CasePage(summary).root);
  } catch (e) {
    main.appendChild(el("div", "error",
      e instanceof ApiError ? e.detail : String(e)));
  }
}

window.addEventListener("hashchange", () => void route());
void route();
