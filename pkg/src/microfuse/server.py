"""HTTP service backing the correspondence/QA browser.

Serves case listings, slice and overlay PNGs, the persisted correspondence
(GET/PUT with validation), registration runs (POST, one in flight per case),
and the metrics report. Static frontend files are mounted at the root when a
built frontend directory is available.
"""

from __future__ import annotations

import glob
import json
import os
import threading
from collections import defaultdict

from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .pipeline import (
    Correspondence,
    PipelineConfig,
    histology_indices,
    load_correspondence,
    prepare_case,
    propagate_correspondence,
    run_case,
    save_correspondence,
)


class CorrespondenceBody(BaseModel):
    anchor: tuple[int, int]
    histology_spacing_mm: float = Field(default=3.0, gt=0)
    microus_spacing_mm: float = Field(default=1.0, gt=0)


def _png(path: str) -> Response:
    if not os.path.exists(path):
        raise HTTPException(status_code=404, detail=f"not found: {os.path.basename(path)}")
    with open(path, "rb") as f:
        return Response(content=f.read(), media_type="image/png")


def create_app(root, frontend_dir=None) -> FastAPI:
    root = os.fspath(root)
    app = FastAPI(title="microfuse QA service")
    case_locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
    registry_lock = threading.Lock()

    def lock_for(case_id: str) -> threading.Lock:
        with registry_lock:
            return case_locks[case_id]

    def case_dir(case_id: str) -> str:
        path = os.path.join(root, case_id)
        if os.path.basename(case_id) != case_id or not os.path.isdir(path):
            raise HTTPException(status_code=404, detail=f"unknown case {case_id!r}")
        return path

    def micro_count(case_path: str) -> int:
        vol_header = os.path.join(case_path, "microus", "volume.json")
        if os.path.exists(vol_header):
            with open(vol_header) as f:
                return int(json.load(f)["dims"][2])
        return len(glob.glob(os.path.join(case_path, "microus", "axial", "slice_*.png")))

    def ensure_prepared(case_id: str, case_path: str) -> None:
        axial = glob.glob(os.path.join(case_path, "microus", "axial", "slice_*.png"))
        if not axial:
            with lock_for(case_id):
                prepare_case(PipelineConfig(case_root=case_path))

    app.state.case_locks = case_locks
    app.state.lock_for = lock_for

    @app.get("/api/cases")
    def list_cases() -> list[str]:
        if not os.path.isdir(root):
            return []
        return sorted(
            d for d in os.listdir(root)
            if os.path.isdir(os.path.join(root, d, "microus"))
            or os.path.isdir(os.path.join(root, d, "histology"))
        )

    @app.get("/api/cases/{case_id}")
    def case_view(case_id: str) -> dict:
        path = case_dir(case_id)
        ensure_prepared(case_id, path)
        corr_path = os.path.join(path, "correspondence.json")
        corr = None
        if os.path.exists(corr_path):
            c = load_correspondence(corr_path)
            corr = {
                "anchor": list(c.anchor),
                "histology_spacing_mm": c.histology_spacing_mm,
                "microus_spacing_mm": c.microus_spacing_mm,
            }
        report_path = os.path.join(path, "output", "report.json")
        report = None
        if os.path.exists(report_path):
            with open(report_path) as f:
                report = json.load(f)
        return {
            "id": case_id,
            "n_micro": micro_count(path),
            "n_histology": len(histology_indices(path)),
            "correspondence": corr,
            "registered": report is not None,
            "report": report,
            "busy": lock_for(case_id).locked(),
        }

    @app.get("/api/cases/{case_id}/microus/slices/{k}.png")
    def micro_slice(case_id: str, k: int) -> Response:
        path = case_dir(case_id)
        ensure_prepared(case_id, path)
        return _png(os.path.join(path, "microus", "axial", f"slice_{k:03d}.png"))

    @app.get("/api/cases/{case_id}/histology/{n}.png")
    def histology_slice(case_id: str, n: int) -> Response:
        return _png(os.path.join(case_dir(case_id), "histology", f"slice_{n:02d}.png"))

    @app.get("/api/cases/{case_id}/overlays/{n}.png")
    def overlay(case_id: str, n: int) -> Response:
        return _png(os.path.join(case_dir(case_id), "output", "overlays", f"h{n:02d}.png"))

    @app.get("/api/cases/{case_id}/correspondence")
    def get_correspondence(case_id: str) -> dict:
        path = os.path.join(case_dir(case_id), "correspondence.json")
        if not os.path.exists(path):
            raise HTTPException(status_code=404, detail="no correspondence set")
        c = load_correspondence(path)
        return {
            "anchor": list(c.anchor),
            "histology_spacing_mm": c.histology_spacing_mm,
            "microus_spacing_mm": c.microus_spacing_mm,
        }

    @app.put("/api/cases/{case_id}/correspondence")
    def put_correspondence(case_id: str, body: CorrespondenceBody) -> dict:
        path = case_dir(case_id)
        ensure_prepared(case_id, path)
        n_hist = len(histology_indices(path))
        n_micro = micro_count(path)
        h, m = body.anchor
        if not (0 <= h < n_hist):
            raise HTTPException(
                status_code=422,
                detail=f"anchor histology index {h} outside [0, {n_hist})")
        if not (0 <= m < n_micro):
            raise HTTPException(
                status_code=422,
                detail=f"anchor micro index {m} outside [0, {n_micro})")
        corr = Correspondence(anchor=(h, m),
                              histology_spacing_mm=body.histology_spacing_mm,
                              microus_spacing_mm=body.microus_spacing_mm)
        save_correspondence(corr, os.path.join(path, "correspondence.json"))
        pairs, droppedrecs = propagate_correspondence(corr, n_hist, n_micro)
        return {
            "anchor": [h, m],
            "histology_spacing_mm": corr.histology_spacing_mm,
            "microus_spacing_mm": corr.microus_spacing_mm,
            "mapping": [{"histology": a, "micro": b} for a, b in pairs],
            "dropped": droppedrecs,
        }

    @app.post("/api/cases/{case_id}/register")
    def register(case_id: str) -> dict:
        path = case_dir(case_id)
        lock = lock_for(case_id)
        if not lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="registration already running")
        try:
            report = run_case(PipelineConfig(case_root=path))
            return {"status": "completed", "k": report.k, "means": report.means()}
        except ValueError as e:
            raise HTTPException(status_code=422, detail=str(e)) from e
        finally:
            lock.release()

    @app.get("/api/cases/{case_id}/report")
    def report(case_id: str) -> dict:
        path = os.path.join(case_dir(case_id), "output", "report.json")
        if not os.path.exists(path):
            raise HTTPException(status_code=404, detail="case not registered yet")
        with open(path) as f:
            return json.load(f)

    if frontend_dir and os.path.isdir(frontend_dir):
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="frontend")
    return app


def serve(root, port: int = 8000, host: str = "127.0.0.1", frontend_dir=None) -> None:
    """Run the QA service (blocking)."""
    import uvicorn

    default_frontend = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(
        os.path.abspath(__file__)))), "frontend", "dist")
    app = create_app(root, frontend_dir or (default_frontend if os.path.isdir(default_frontend) else None))
    uvicorn.run(app, host=host, port=port)
