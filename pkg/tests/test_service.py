import base64
import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from bimoment.csp import load_csp
from bimoment.embedding import load_track_set
from bimoment.pipeline import run_manifest
from bimoment.service import create_app, load_snapshot

SEEDS = [
    {"id": 0, "element": "H", "center": [0.25, 0.25, 0.5]},
    {"id": 1, "element": "O", "center": [0.75, 0.75, 0.5]},
]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("service_run")
    doc = {
        "series": [
            {
                "state_label": "rot",
                "synthetic": {"kind": "rotation", "steps": 3, "n": 9},
                "seeds": SEEDS,
            },
            {"state_label": "sca", "synthetic": {"kind": "scaling", "steps": 3, "n": 9}},
        ],
        "csp": {"res": 12, "window": "auto", "padding": 0.0},
        "output_dir": str(tmp / "out"),
    }
    mp = tmp / "manifest.json"
    mp.write_text(json.dumps(doc))
    run_manifest(mp, strict=True)
    return tmp / "out"


@pytest.fixture(scope="module")
def client(run_dir):
    with TestClient(create_app(run_dir)) as c:
        yield c


class TestSummary:
    def test_shape(self, client, run_dir):
        r = client.get("/api/v1/summary")
        assert r.status_code == 200
        doc = r.json()
        assert doc["states"] == ["rot", "sca"]
        assert doc["segments"]["rot"] == ["0", "1"]
        assert doc["segments"]["sca"] == ["all"]
        assert doc["csp_segments"]["rot"] == ["0", "1", "all", "boundary"]
        assert doc["time_steps"] == {"rot": 3, "sca": 3}
        assert len(doc["pca"]["eigenvalues"]) == 4
        assert len(doc["pca"]["loadings"]) == 4
        report = json.loads((run_dir / "report.json").read_text())
        assert doc["content_hash"] == report["content_hash"]

    def test_repeated_calls_byte_identical(self, client):
        a = client.get("/api/v1/summary")
        b = client.get("/api/v1/summary")
        assert a.content == b.content

    def test_etag_and_304(self, client):
        r = client.get("/api/v1/summary")
        etag = r.headers["etag"]
        assert etag.startswith('"') and etag.endswith('"')
        r2 = client.get("/api/v1/summary", headers={"If-None-Match": etag})
        assert r2.status_code == 304
        assert r2.content == b""

    def test_cors_for_local_origin(self, client):
        r = client.get(
            "/api/v1/summary", headers={"Origin": "http://localhost:5173"}
        )
        assert r.headers.get("access-control-allow-origin") == "http://localhost:5173"


class TestTracks:
    def test_default_axes(self, client):
        r = client.get("/api/v1/tracks")
        assert r.status_code == 200
        doc = r.json()
        assert doc["axes"] == [1, 2]
        keys = [(t["state"], t["segment"]) for t in doc["tracks"]]
        assert keys == [("rot", 0), ("rot", 1), ("sca", "all")]
        assert all(len(t["points"]) == 3 for t in doc["tracks"])
        for t in doc["tracks"]:
            assert set(t["metrics"]) == {"arc_length", "bbox_area", "max_step"}

    def test_slice_matches_full_scores(self, client, run_dir):
        ts = load_track_set(run_dir / "tracks.json")
        r = client.get("/api/v1/tracks", params={"axes": "2,3"})
        doc = r.json()
        for t in doc["tracks"]:
            pts = ts.tracks[(t["state"], t["segment"])]
            for got, p in zip(t["points"], pts):
                assert got["x"] == p.scores[1]
                assert got["y"] == p.scores[2]

    def test_equal_axes_rejected(self, client):
        assert client.get("/api/v1/tracks", params={"axes": "1,1"}).status_code == 400

    def test_out_of_range_axes_rejected(self, client):
        assert client.get("/api/v1/tracks", params={"axes": "0,2"}).status_code == 400
        assert client.get("/api/v1/tracks", params={"axes": "1,5"}).status_code == 400

    def test_malformed_axes_rejected(self, client):
        assert client.get("/api/v1/tracks", params={"axes": "one,two"}).status_code == 400
        assert client.get("/api/v1/tracks", params={"axes": "1,2,3"}).status_code == 400


class TestCSP:
    def decode(self, doc):
        raw = base64.b64decode(doc["density_b64"])
        r1, r2 = doc["res"]
        return np.frombuffer(raw, dtype="<f8").reshape(r2, r1)

    def test_full_domain_reserved_key(self, client, run_dir):
        r = client.get("/api/v1/csp/rot/all/1")
        assert r.status_code == 200
        doc = r.json()
        stored = load_csp(run_dir / "csp/rot/all/t0001")
        assert doc["total_mass"] == stored.total_mass
        assert np.array_equal(self.decode(doc), stored.density)

    def test_peel_additivity_client_side(self, client):
        full = self.decode(client.get("/api/v1/csp/rot/all/0").json())
        parts = sum(
            self.decode(client.get(f"/api/v1/csp/rot/{seg}/0").json())
            for seg in ("0", "1", "boundary")
        )
        assert np.abs(parts - full).max() < 1e-9

    def test_unknown_state_404(self, client):
        assert client.get("/api/v1/csp/nope/all/0").status_code == 404

    def test_unknown_segment_404(self, client):
        assert client.get("/api/v1/csp/rot/7/0").status_code == 404
        assert client.get("/api/v1/csp/sca/0/0").status_code == 404

    def test_step_out_of_range_404(self, client):
        assert client.get("/api/v1/csp/rot/all/3").status_code == 404
        assert client.get("/api/v1/csp/rot/all/-1").status_code == 404

    def test_mass_matches_sidecar(self, client, run_dir):
        doc = client.get("/api/v1/csp/rot/0/2").json()
        side = json.loads((run_dir / "csp/rot/0/t0002.json").read_text())
        assert doc["total_mass"] == side["total_mass"]
        assert doc["out_of_window"] == side["out_of_window"]


class TestFiber:
    POLY = [[0.4, 0.0], [0.6, 0.0], [0.6, 1.0], [0.4, 1.0]]

    def test_square_polygon_nonempty(self, client):
        r = client.post(
            "/api/v1/fiber", json={"state": "rot", "t": 0, "polygon": self.POLY}
        )
        assert r.status_code == 200
        doc = r.json()
        assert len(doc["triangles"]) > 0
        assert len(doc["vertices"]) > 0
        assert doc["state"] == "rot"

    def test_identical_requests_equal(self, client):
        body = {"state": "rot", "t": 0, "polygon": self.POLY}
        a = client.post("/api/v1/fiber", json=body)
        b = client.post("/api/v1/fiber", json=body)
        assert a.content == b.content

    def test_seeds_accompany_mesh(self, client):
        doc = client.post(
            "/api/v1/fiber", json={"state": "rot", "t": 0, "polygon": self.POLY}
        ).json()
        assert [s["element"] for s in doc["seeds"]] == ["H", "O"]
        assert doc["seeds"][0]["center"] == SEEDS[0]["center"]
        assert all(s["weight"] > 0 for s in doc["seeds"])

    def test_seedless_series_returns_empty_seeds(self, client):
        doc = client.post(
            "/api/v1/fiber", json={"state": "sca", "t": 0, "polygon": self.POLY}
        ).json()
        assert doc["seeds"] == []

    def test_polygon_outside_range_empty_200(self, client):
        poly = [[5.0, 5.0], [6.0, 5.0], [6.0, 6.0], [5.0, 6.0]]
        r = client.post("/api/v1/fiber", json={"state": "rot", "t": 0, "polygon": poly})
        assert r.status_code == 200
        assert r.json()["triangles"] == []

    def test_self_intersecting_polygon_400(self, client):
        bowtie = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]
        r = client.post("/api/v1/fiber", json={"state": "rot", "t": 0, "polygon": bowtie})
        assert r.status_code == 400
        assert "polygon" in r.json()["detail"]

    def test_two_vertex_polygon_400(self, client):
        r = client.post(
            "/api/v1/fiber",
            json={"state": "rot", "t": 0, "polygon": [[0.0, 0.0], [1.0, 1.0]]},
        )
        assert r.status_code == 400

    def test_unknown_state_404(self, client):
        r = client.post("/api/v1/fiber", json={"state": "x", "t": 0, "polygon": self.POLY})
        assert r.status_code == 404

    def test_step_out_of_range_404(self, client):
        r = client.post("/api/v1/fiber", json={"state": "rot", "t": 9, "polygon": self.POLY})
        assert r.status_code == 404

    def test_bad_body_400(self, client):
        r = client.post("/api/v1/fiber", json={"state": "rot", "t": "zero", "polygon": self.POLY})
        assert r.status_code == 400
        r = client.post("/api/v1/fiber", json={"state": "rot", "t": 0, "polygon": "box"})
        assert r.status_code == 400

    def test_timeout_504(self, run_dir, monkeypatch):
        import bimoment.service as svc

        orig = svc.extract_fiber_surface

        def slow(field, poly):
            time.sleep(0.3)
            return orig(field, poly)

        monkeypatch.setattr(svc, "extract_fiber_surface", slow)
        with TestClient(create_app(run_dir, fiber_timeout_s=0.05)) as c:
            r = c.post(
                "/api/v1/fiber", json={"state": "rot", "t": 0, "polygon": self.POLY}
            )
            assert r.status_code == 504


class TestStaticUI:
    @pytest.fixture()
    def ui_dir(self, tmp_path):
        d = tmp_path / "ui"
        d.mkdir()
        (d / "index.html").write_text("<!doctype html><title>explorer</title>")
        (d / "app.js").write_text("export {};")
        return d

    def test_ui_dir_served_at_root(self, run_dir, ui_dir):
        with TestClient(create_app(run_dir, ui_dir=ui_dir)) as c:
            r = c.get("/")
            assert r.status_code == 200
            assert "explorer" in r.text
            assert c.get("/app.js").status_code == 200
            # API routes keep precedence over the mount
            assert c.get("/api/v1/summary").status_code == 200

    def test_no_ui_dir_root_404(self, client):
        assert client.get("/").status_code == 404


class TestLifecycle:
    def test_empty_dir_answers_404(self, tmp_path):
        with TestClient(create_app(tmp_path)) as c:
            r = c.get("/api/v1/summary")
            assert r.status_code == 404
            assert "report" in r.json()["detail"]
            assert c.get("/api/v1/tracks").status_code == 404

    def test_failed_run_dir_answers_404(self, tmp_path):
        (tmp_path / "report.json").write_text(json.dumps({"status": "failed"}))
        with TestClient(create_app(tmp_path)) as c:
            assert c.get("/api/v1/summary").status_code == 404

    def test_before_startup_503(self, run_dir):
        app = create_app(run_dir)
        # no lifespan context: the snapshot never loads
        c = TestClient(app)
        assert c.get("/api/v1/summary").status_code == 503

    def test_load_snapshot_direct(self, run_dir):
        snap = load_snapshot(run_dir)
        assert snap.states == ["rot", "sca"]
        assert snap.etag.strip('"') == snap.report["content_hash"]
