"""HTTP/JSON API over a completed run directory.

The dataset is loaded once at startup into an immutable snapshot; every
GET is a pure function of it, stamped with an ETag equal to the run's
content hash. The only compute endpoint is POST /api/v1/fiber, which
lazily loads the requested step's field through a small LRU cache and
extracts the preimage surface of a client-drawn control polygon.
"""

from __future__ import annotations

import base64
import json
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeoutError
from contextlib import asynccontextmanager
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .csp import load_csp
from .cubeio import load_cube
from .embedding import TrackSet, load_track_set, track_metrics
from .fiber import ControlPolygon, extract_fiber_surface, mesh_to_json_dict
from .grids import BivariateField, RangeWindow
from .pipeline import REPORT_NAME, MANIFEST_ECHO
from .synthetic import default_synthetic_spec, gen_rotation_field, gen_scaling_field

__all__ = ["SnapshotError", "DatasetSnapshot", "load_snapshot", "create_app"]

_LOCAL_ORIGINS = r"^https?://(localhost|127\.0\.0\.1)(:\d+)?$"


class SnapshotError(RuntimeError):
    """The data directory does not hold a completed run."""


@dataclass(frozen=True)
class DatasetSnapshot:
    """Immutable view of one run directory."""

    data_dir: Path
    report: dict
    manifest: dict
    track_set: TrackSet
    window: RangeWindow
    etag: str

    @property
    def states(self) -> list[str]:
        return [s["state"] for s in self.report["series"]]

    def series_info(self, state: str) -> dict | None:
        for s in self.report["series"]:
            if s["state"] == state:
                return s
        return None


def load_snapshot(data_dir) -> DatasetSnapshot:
    root = Path(data_dir)
    report_path = root / REPORT_NAME
    if not report_path.is_file():
        raise SnapshotError(f"no run report at {report_path}")
    try:
        with open(report_path) as fh:
            report = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"run report is not valid JSON: {exc}") from None
    if report.get("status") != "ok":
        raise SnapshotError(f"run report status is {report.get('status')!r}, not 'ok'")
    if not report.get("content_hash"):
        raise SnapshotError("run report carries no content hash")
    try:
        with open(root / MANIFEST_ECHO) as fh:
            manifest = json.load(fh)
        track_set = load_track_set(root / "tracks.json")
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise SnapshotError(f"incomplete run directory: {exc}") from None
    w = report["window"]
    return DatasetSnapshot(
        data_dir=root,
        report=report,
        manifest=manifest,
        track_set=track_set,
        window=RangeWindow(w[0], w[1], w[2], w[3]),
        etag='"' + report["content_hash"] + '"',
    )


def _field_loader(snapshot: DatasetSnapshot, maxsize: int):
    """Build the lazily-caching (state, t) -> (field, seeds) resolver.

    Seeds come from the manifest when given there, otherwise from the
    step's own cube header, matching how the pipeline segments.
    """

    by_state = {e["state_label"]: e for e in snapshot.manifest["series"]}

    @lru_cache(maxsize=max(1, maxsize))
    def load_field(state: str, t: int) -> tuple[BivariateField, tuple]:
        entry = by_state.get(state)
        if entry is None:
            raise KeyError(state)
        manifest_seeds = tuple(
            {
                "id": a["id"],
                "element": a["element"],
                "center": list(a["center"]),
                "weight": a["weight"],
            }
            for a in entry.get("seeds", [])
        )
        if "synthetic" in entry:
            s = entry["synthetic"]
            if not 0 <= t < int(s["steps"]):
                raise KeyError(t)
            spec = default_synthetic_spec(int(s["n"]))
            if s["kind"] == "rotation":
                return gen_rotation_field(t, spec), manifest_seeds
            return gen_scaling_field(t, float(s["b"]), spec), manifest_seeds
        steps = entry["cube_steps"]
        if not 0 <= t < len(steps):
            raise KeyError(t)
        p1, p2 = steps[t]
        g1, atoms = load_cube(p1)
        g2, _ = load_cube(p2)
        seeds = manifest_seeds or tuple(
            {
                "id": a.id,
                "element": a.element,
                "center": list(a.center),
                "weight": a.weight,
            }
            for a in atoms
        )
        return BivariateField(f1=g1, f2=g2), seeds

    return load_field


def create_app(data_dir, *, fiber_timeout_s: float = 30.0,
               field_cache_steps: int = 4, ui_dir=None) -> FastAPI:
    """Build the service over one run directory.

    The snapshot loads during startup; until then requests answer 503,
    and if the directory holds no completed run they answer 404. When
    ui_dir is given its files are served at /, so one process can host
    both the API and the browser client.
    """
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        try:
            snapshot = load_snapshot(data_dir)
            app.state.snapshot = snapshot
            app.state.load_field = _field_loader(snapshot, field_cache_steps)
        except SnapshotError as exc:
            app.state.load_error = str(exc)
        yield
        app.state.executor.shutdown(wait=False, cancel_futures=True)

    app = FastAPI(title="bimoment service", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origin_regex=_LOCAL_ORIGINS,
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.snapshot = None
    app.state.load_error = None
    app.state.load_field = None
    # extraction runs off the event loop so the timeout stays enforceable
    app.state.executor = ThreadPoolExecutor(max_workers=2)

    def snap() -> DatasetSnapshot:
        if app.state.snapshot is not None:
            return app.state.snapshot
        if app.state.load_error is not None:
            raise HTTPException(status_code=404, detail=app.state.load_error)
        raise HTTPException(status_code=503, detail="dataset still loading")

    def cached_or_none(request: Request, s: DatasetSnapshot) -> Response | None:
        if request.headers.get("if-none-match") == s.etag:
            return Response(status_code=304, headers={"ETag": s.etag})
        return None

    def tagged(payload: dict, s: DatasetSnapshot) -> JSONResponse:
        return JSONResponse(payload, headers={"ETag": s.etag})

    @app.get("/api/v1/summary")
    def summary(request: Request):
        s = snap()
        hit = cached_or_none(request, s)
        if hit is not None:
            return hit
        model = s.track_set.model
        return tagged(
            {
                "states": s.states,
                "segments": {e["state"]: e["segments"] for e in s.report["series"]},
                "csp_segments": {
                    e["state"]: e["csp_segments"] for e in s.report["series"]
                },
                "time_steps": {e["state"]: e["steps"] for e in s.report["series"]},
                "times_fs": {e["state"]: e["times_fs"] for e in s.report["series"]},
                "window": s.report["window"],
                "res": s.report["res"],
                "counts": s.report["counts"],
                "pca": {
                    "eigenvalues": model.eigenvalues.tolist(),
                    "loadings": model.components.tolist(),
                    "mean": model.mean.tolist(),
                    "explained_variance_ratio": model.explained_variance_ratio.tolist(),
                },
                "content_hash": s.report["content_hash"],
            },
            s,
        )

    @app.get("/api/v1/tracks")
    def tracks(request: Request, axes: str = "1,2"):
        s = snap()
        hit = cached_or_none(request, s)
        if hit is not None:
            return hit
        parts = axes.split(",")
        try:
            a, b = (int(parts[0]), int(parts[1]))
        except (ValueError, IndexError):
            raise HTTPException(status_code=400, detail=f"bad axes {axes!r}") from None
        if len(parts) != 2 or not (1 <= a <= 4 and 1 <= b <= 4) or a == b:
            raise HTTPException(
                status_code=400, detail="axes must be two distinct values in 1..4"
            )
        metrics = {
            (m["state"], m["segment"]): m for m in track_metrics(s.track_set, (a, b))
        }
        out = []
        for (state, segment), pts in sorted(
            s.track_set.tracks.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))
        ):
            m = metrics[(state, segment)]
            out.append(
                {
                    "state": state,
                    "segment": segment,
                    "points": [
                        {
                            "time_index": p.time_index,
                            "time_fs": p.time_fs,
                            "x": p.scores[a - 1],
                            "y": p.scores[b - 1],
                        }
                        for p in pts
                    ],
                    "metrics": {
                        "arc_length": m["arc_length"],
                        "bbox_area": m["bbox_area"],
                        "max_step": m["max_step"],
                    },
                }
            )
        return tagged({"axes": [a, b], "tracks": out}, s)

    @app.get("/api/v1/csp/{state}/{segment}/{t}")
    def csp(request: Request, state: str, segment: str, t: int):
        s = snap()
        hit = cached_or_none(request, s)
        if hit is not None:
            return hit
        info = s.series_info(state)
        if info is None:
            raise HTTPException(status_code=404, detail=f"unknown state {state!r}")
        if segment not in info["csp_segments"]:
            raise HTTPException(
                status_code=404, detail=f"unknown segment {segment!r} for {state!r}"
            )
        if not 0 <= t < info["steps"]:
            raise HTTPException(status_code=404, detail=f"step {t} out of range")
        prefix = s.data_dir / "csp" / state / segment / f"t{t:04d}"
        try:
            hist = load_csp(prefix)
        except (OSError, ValueError) as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return tagged(
            {
                "state": state,
                "segment": segment,
                "time_index": t,
                "window": list(hist.window.as_tuple()),
                "res": [hist.res[0], hist.res[1]],
                "density_b64": base64.b64encode(hist.density.tobytes()).decode(),
                "dtype": "<f8",
                "order": "f1-fastest",
                "total_mass": hist.total_mass,
                "out_of_window": hist.out_of_window,
            },
            s,
        )

    @app.post("/api/v1/fiber")
    def fiber(payload: dict = Body(...)):
        s = snap()
        state = payload.get("state")
        t = payload.get("t")
        polygon = payload.get("polygon")
        if not isinstance(state, str) or not isinstance(t, int) or isinstance(t, bool):
            raise HTTPException(status_code=400, detail="need state (str) and t (int)")
        if not isinstance(polygon, list):
            raise HTTPException(status_code=400, detail="polygon must be a vertex list")
        try:
            field, seeds = app.state.load_field(state, t)
        except KeyError as exc:
            raise HTTPException(
                status_code=404, detail=f"unknown step {exc}"
            ) from None
        try:
            poly = ControlPolygon(polygon, window=s.window)
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=f"invalid polygon: {exc}") from None
        future = app.state.executor.submit(extract_fiber_surface, field, poly)
        try:
            mesh = future.result(timeout=fiber_timeout_s)
        except FutureTimeoutError:
            future.cancel()
            raise HTTPException(
                status_code=504, detail=f"extraction exceeded {fiber_timeout_s}s"
            ) from None
        doc = mesh_to_json_dict(mesh)
        doc.update({"state": state, "time_index": t, "seeds": list(seeds)})
        return JSONResponse(doc, headers={"ETag": s.etag})

    if ui_dir is not None:
        # mounted last so the API routes above keep precedence
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
