import json
import os
import shutil

import pytest
from fastapi.testclient import TestClient

from microfuse.server import create_app


@pytest.fixture()
def client(registered_case, tmp_path):
    layout, _ = registered_case
    root = tmp_path / "cases"
    root.mkdir()
    shutil.copytree(layout.root, root / "alpha")
    (root / "beta").mkdir()
    shutil.copytree(os.path.join(layout.root, "microus"), root / "beta" / "microus")
    shutil.copytree(os.path.join(layout.root, "histology"), root / "beta" / "histology")
    app = create_app(root)
    return TestClient(app), app, str(root)


def test_list_cases(client):
    c, _, _ = client
    assert c.get("/api/cases").json() == ["alpha", "beta"]


def test_unknown_case_404(client):
    c, _, _ = client
    assert c.get("/api/cases/nope").status_code == 404
    assert c.get("/api/cases/nope/histology/0.png").status_code == 404


def test_case_view(client):
    c, _, _ = client
    doc = c.get("/api/cases/alpha").json()
    assert doc["id"] == "alpha"
    assert doc["n_histology"] == 6
    assert doc["n_micro"] > 0
    assert doc["registered"] is True
    assert doc["correspondence"]["anchor"][0] == 0


def test_slice_and_overlay_pngs(client):
    c, _, _ = client
    r = c.get("/api/cases/alpha/microus/slices/12.png")
    assert r.status_code == 200 and r.headers["content-type"] == "image/png"
    assert c.get("/api/cases/alpha/histology/0.png").status_code == 200
    assert c.get("/api/cases/alpha/overlays/0.png").status_code == 200
    assert c.get("/api/cases/alpha/microus/slices/999.png").status_code == 404


def test_correspondence_roundtrip(client):
    c, _, root = client
    body = {"anchor": [3, 20]}
    r = c.put("/api/cases/alpha/correspondence", json=body)
    assert r.status_code == 200
    doc = r.json()
    assert doc["anchor"] == [3, 20]
    # derived mapping row: h4 -> m23 (3 mm : 1 mm arithmetic)
    assert {"histology": 4, "micro": 23} in doc["mapping"]
    echo = c.get("/api/cases/alpha/correspondence").json()
    assert echo["anchor"] == [3, 20]
    assert echo["histology_spacing_mm"] == 3.0
    on_disk = json.load(open(os.path.join(root, "alpha", "correspondence.json")))
    assert on_disk["anchor"] == [3, 20]


def test_correspondence_validation_422(client):
    c, _, _ = client
    r = c.put("/api/cases/alpha/correspondence", json={"anchor": [99, 0]})
    assert r.status_code == 422
    assert "histology index" in r.json()["detail"]
    r = c.put("/api/cases/alpha/correspondence", json={"anchor": [0, 9999]})
    assert r.status_code == 422
    r = c.put("/api/cases/alpha/correspondence",
              json={"anchor": [0, 1], "histology_spacing_mm": -1.0})
    assert r.status_code == 422


def test_report_endpoint(client):
    c, _, _ = client
    doc = c.get("/api/cases/alpha/report").json()
    assert doc["k"] == 6
    assert c.get("/api/cases/beta/report").status_code == 404


def test_register_endpoint_and_busy_409(client):
    c, app, root = client
    # beta lacks correspondence/masks: registration fails cleanly
    assert c.post("/api/cases/beta/register").status_code == 422
    shutil.copy(os.path.join(root, "alpha", "correspondence.json"),
                os.path.join(root, "beta", "correspondence.json"))
    shutil.copytree(os.path.join(root, "alpha", "masks"), os.path.join(root, "beta", "masks"))
    r = c.post("/api/cases/beta/register")
    assert r.status_code == 200
    assert r.json()["status"] == "completed"
    assert c.get("/api/cases/beta/report").status_code == 200
    # a held per-case lock makes a concurrent register report 409 busy
    lock = app.state.lock_for("beta")
    lock.acquire()
    try:
        assert c.post("/api/cases/beta/register").status_code == 409
    finally:
        lock.release()
