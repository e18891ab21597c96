"""Manifest-driven end-to-end runs.

A run loads or generates every series, fixes one shared range window,
labels and peels where seed atoms exist, then reduces scatterplots to
moment vectors, a PCA model, and tracks. Artifacts land in a run
directory with a JSON report; stages are cached by content hash so a
rerun recomputes only what changed.

Downstream stages always read the upstream artifacts back from disk
rather than reusing in-memory values, so cached and fresh runs follow
the same code path and produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .csp import CSPHistogram, compute_csp, load_csp, peel_all, write_csp
from .cubeio import default_atom_weight, load_cube, write_cube
from .embedding import build_tracks, fit_pca, write_tracks_csv, write_tracks_json
from .fiber import ControlPolygon, export_mesh, extract_fiber_surface
from .grids import (
    Atom,
    AtomList,
    BivariateField,
    BivariateTimeSeries,
    RangeWindow,
    TimeStep,
    global_range_window,
)
from .moments import (
    MomentVector,
    build_moment_table,
    csp_moments,
    load_moments_json,
    normalize_moments,
    write_moments_csv,
    write_moments_json,
)
from .render import render_csp_png
from .segmentation import (
    BOUNDARY_SEGMENT,
    label_power_diagram,
    load_labels,
    write_labels,
)
from .synthetic import default_synthetic_spec, gen_rotation_field, gen_scaling_field

__all__ = [
    "ManifestError",
    "PipelineError",
    "AnalysisManifest",
    "SeriesConfig",
    "run_manifest",
    "generate_cubes",
    "segment_cube",
    "csp_from_cubes",
    "moments_from_csps",
    "pca_from_moments",
    "fiber_from_cubes",
    "render_csp_file",
    "ALL_SEGMENT",
    "BOUNDARY_NAME",
]

# reserved segment names in artifact paths and service keys
ALL_SEGMENT = "all"
BOUNDARY_NAME = "boundary"

_POOLINGS = ("per-order", "per-component")
_WEIGHT_SOURCES = ("covalent-radius", "uniform")
_SYNTH_KINDS = ("rotation", "scaling")

REPORT_NAME = "report.json"
CACHE_NAME = "cache.json"
MANIFEST_ECHO = "manifest.json"


class ManifestError(ValueError):
    """Invalid manifest contents; maps to the validation exit code."""


class PipelineError(RuntimeError):
    """A stage failed mid-run. Carries the stage name and input key."""

    def __init__(self, stage: str, key, message: str):
        self.stage = stage
        self.key = key
        detail = f"stage {stage!r} failed"
        if key is not None:
            detail += f" for {key}"
        super().__init__(f"{detail}: {message}")


def _require(cond, msg):
    if not cond:
        raise ManifestError(msg)


def _as_seed_atoms(entries, label) -> AtomList:
    atoms = []
    for k, e in enumerate(entries):
        _require(isinstance(e, dict), f"series {label!r}: seed {k} must be an object")
        _require("id" in e and "element" in e and "center" in e,
                 f"series {label!r}: seed {k} needs id, element, center")
        weight = e.get("weight")
        if weight is None:
            weight = default_atom_weight(str(e["element"]))
        try:
            atoms.append(
                Atom(
                    id=int(e["id"]),
                    element=str(e["element"]),
                    center=tuple(float(c) for c in e["center"]),
                    weight=float(weight),
                )
            )
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"series {label!r}: bad seed {k}: {exc}") from None
    try:
        return AtomList(tuple(atoms))
    except ValueError as exc:
        raise ManifestError(f"series {label!r}: {exc}") from None


@dataclass(frozen=True)
class SeriesConfig:
    """One input series: either a synthetic recipe or cube file pairs."""

    state_label: str
    synthetic: dict | None = None
    cube_steps: tuple[tuple[Path, Path], ...] | None = None
    times_fs: tuple[float, ...] = ()
    seeds: AtomList = dc_field(default_factory=AtomList)

    @property
    def n_steps(self) -> int:
        if self.synthetic is not None:
            return int(self.synthetic["steps"])
        return len(self.cube_steps)


def _parse_series(entry, base_dir: Path, index: int) -> SeriesConfig:
    _require(isinstance(entry, dict), f"series[{index}] must be an object")
    label = entry.get("state_label")
    _require(isinstance(label, str) and label, f"series[{index}] needs a state_label")
    _require("/" not in label and "\\" not in label and label not in (".", ".."),
             f"series {label!r}: state_label must be usable as a directory name")
    has_synth = "synthetic" in entry
    has_cubes = "cube_steps" in entry
    _require(has_synth != has_cubes,
             f"series {label!r} needs exactly one of synthetic or cube_steps")

    times = entry.get("times_fs")
    seeds = _as_seed_atoms(entry.get("seeds", []), label)

    if has_synth:
        s = entry["synthetic"]
        _require(isinstance(s, dict), f"series {label!r}: synthetic must be an object")
        kind = s.get("kind")
        _require(kind in _SYNTH_KINDS,
                 f"series {label!r}: synthetic kind must be one of {_SYNTH_KINDS}")
        steps = s.get("steps", 50)
        _require(isinstance(steps, int) and steps >= 1,
                 f"series {label!r}: synthetic steps must be an integer >= 1")
        n = s.get("n", 64)
        _require(isinstance(n, int) and n >= 2,
                 f"series {label!r}: synthetic n must be an integer >= 2")
        b = float(s.get("b", 0.0))
        _require(-0.5 <= b <= 0.0, f"series {label!r}: synthetic b must lie in [-0.5, 0]")
        spec = {"kind": kind, "steps": int(steps), "n": int(n), "b": b}
        n_steps = int(steps)
        cube_steps = None
    else:
        raw_steps = entry["cube_steps"]
        _require(isinstance(raw_steps, list) and raw_steps,
                 f"series {label!r}: cube_steps must be a non-empty list")
        cube_steps = []
        for k, pair in enumerate(raw_steps):
            _require(isinstance(pair, (list, tuple)) and len(pair) == 2,
                     f"series {label!r}: cube_steps[{k}] must be an [f1, f2] pair")
            resolved = []
            for p in pair:
                path = Path(p)
                if not path.is_absolute():
                    path = base_dir / path
                _require(path.is_file(), f"series {label!r}: missing cube file {path}")
                resolved.append(path)
            cube_steps.append((resolved[0], resolved[1]))
        cube_steps = tuple(cube_steps)
        spec = None
        n_steps = len(cube_steps)

    if times is None:
        times = tuple(float(t) for t in range(n_steps))
    else:
        _require(isinstance(times, list) and len(times) == n_steps,
                 f"series {label!r}: times_fs must list one time per step")
        try:
            times = tuple(float(t) for t in times)
        except (TypeError, ValueError):
            raise ManifestError(f"series {label!r}: times_fs must be numbers") from None
        _require(all(b > a for a, b in zip(times, times[1:])),
                 f"series {label!r}: times_fs must be strictly increasing")

    return SeriesConfig(
        state_label=label,
        synthetic=spec,
        cube_steps=cube_steps,
        times_fs=times,
        seeds=seeds,
    )


@dataclass(frozen=True)
class AnalysisManifest:
    """Validated run configuration.

    Window is either the string "auto" (joint data bounds plus padding)
    or four explicit numbers; padding only applies to auto windows.
    """

    series: tuple[SeriesConfig, ...]
    res: tuple[int, int]
    window: str | tuple[float, float, float, float]
    padding: float
    pooling: str
    weights_source: str
    output_dir: Path | None = None

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "AnalysisManifest":
        base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
        _require(isinstance(data, dict), "manifest must be a JSON object")
        raw_series = data.get("series")
        _require(isinstance(raw_series, list) and raw_series,
                 "manifest needs a non-empty series list")
        series = tuple(_parse_series(e, base_dir, i) for i, e in enumerate(raw_series))
        labels = [s.state_label for s in series]
        _require(len(set(labels)) == len(labels), "state labels must be unique")

        csp = data.get("csp", {})
        _require(isinstance(csp, dict), "csp section must be an object")
        res = csp.get("res", 64)
        if isinstance(res, int):
            res = (res, res)
        else:
            _require(isinstance(res, list) and len(res) == 2
                     and all(isinstance(r, int) for r in res),
                     "csp res must be an integer or an [R1, R2] pair")
            res = (res[0], res[1])
        _require(min(res) >= 2, "csp res must be >= 2")

        window = csp.get("window", "auto")
        if window != "auto":
            _require(isinstance(window, list) and len(window) == 4,
                     'csp window must be "auto" or [min1, max1, min2, max2]')
            try:
                window = tuple(float(v) for v in window)
                RangeWindow(*window)
            except (TypeError, ValueError) as exc:
                raise ManifestError(f"bad csp window: {exc}") from None
        padding = csp.get("padding", 0.0)
        try:
            padding = float(padding)
        except (TypeError, ValueError):
            raise ManifestError("csp padding must be a number") from None
        _require(padding >= 0.0, "csp padding must be >= 0")

        moments = data.get("moments", {})
        _require(isinstance(moments, dict), "moments section must be an object")
        pooling = moments.get("pooling", "per-order")
        _require(pooling in _POOLINGS, f"moments pooling must be one of {_POOLINGS}")

        seg = data.get("segmentation", {})
        _require(isinstance(seg, dict), "segmentation section must be an object")
        weights = seg.get("weights", "covalent-radius")
        _require(weights in _WEIGHT_SOURCES,
                 f"segmentation weights must be one of {_WEIGHT_SOURCES}")

        out = data.get("output_dir")
        if out is not None:
            out = Path(out)
            if not out.is_absolute():
                out = base_dir / out

        return cls(
            series=series,
            res=res,
            window=window,
            padding=padding,
            pooling=pooling,
            weights_source=weights,
            output_dir=out,
        )

    @classmethod
    def load(cls, path) -> "AnalysisManifest":
        path = Path(path)
        if not path.is_file():
            raise ManifestError(f"manifest file not found: {path}")
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest is not valid JSON: {exc}") from None
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        """JSON echo with cube paths resolved, written into the run dir."""
        series = []
        for s in self.series:
            e: dict = {"state_label": s.state_label, "times_fs": list(s.times_fs)}
            if s.synthetic is not None:
                e["synthetic"] = dict(s.synthetic)
            else:
                e["cube_steps"] = [[str(a), str(b)] for a, b in s.cube_steps]
            if len(s.seeds):
                e["seeds"] = [
                    {
                        "id": a.id,
                        "element": a.element,
                        "center": list(a.center),
                        "weight": a.weight,
                    }
                    for a in s.seeds
                ]
            series.append(e)
        return {
            "series": series,
            "csp": {
                "res": list(self.res),
                "window": "auto" if self.window == "auto" else list(self.window),
                "padding": self.padding,
            },
            "moments": {"pooling": self.pooling},
            "segmentation": {"weights": self.weights_source},
        }


# ---------------------------------------------------------------------------
# hashing and cache bookkeeping


def _hash_bytes(*chunks: bytes) -> str:
    h = hashlib.sha256()
    for c in chunks:
        h.update(c)
        h.update(b"\x00")
    return h.hexdigest()


def _hash_obj(obj) -> str:
    return _hash_bytes(json.dumps(obj, sort_keys=True).encode())


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _json_dump(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _seed_dicts(seeds: AtomList) -> list[dict]:
    return [
        {"id": a.id, "element": a.element, "center": list(a.center), "weight": a.weight}
        for a in seeds
    ]


# ---------------------------------------------------------------------------
# the runner


class _Runner:
    def __init__(self, manifest: AnalysisManifest, out_dir: Path, strict: bool,
                 threads: int):
        self.m = manifest
        self.out = Path(out_dir)
        self.strict = strict
        self.threads = max(1, int(threads))
        self.timings: dict[str, float] = {}
        self._series: dict[str, BivariateTimeSeries] = {}
        self._file_hashes: dict[Path, str] = {}
        cache_path = self.out / CACHE_NAME
        self.cache = {"version": 1, "window": None, "stages": {}}
        if cache_path.is_file():
            try:
                with open(cache_path) as fh:
                    loaded = json.load(fh)
                if loaded.get("version") == 1:
                    self.cache = loaded
            except (OSError, json.JSONDecodeError):
                pass  # corrupt caches are rebuilt, never fatal

    # -- timing -------------------------------------------------------------

    def _clock(self, stage: str, t0: float):
        self.timings[stage] = self.timings.get(stage, 0.0) + (time.perf_counter() - t0)

    # -- input hashing ------------------------------------------------------

    def _file_hash(self, path: Path) -> str:
        if path not in self._file_hashes:
            self._file_hashes[path] = _hash_file(path)
        return self._file_hashes[path]

    def _step_input_hash(self, cfg: SeriesConfig, t: int) -> str:
        if cfg.synthetic is not None:
            return _hash_obj(
                {
                    "synthetic": cfg.synthetic,
                    "t": t,
                    "seeds": _seed_dicts(cfg.seeds),
                    "time_fs": cfg.times_fs[t],
                }
            )
        f1, f2 = cfg.cube_steps[t]
        return _hash_obj(
            {
                "f1": self._file_hash(f1),
                "f2": self._file_hash(f2),
                "time_fs": cfg.times_fs[t],
            }
        )

    def _series_input_hash(self, cfg: SeriesConfig) -> str:
        return _hash_obj([self._step_input_hash(cfg, t) for t in range(cfg.n_steps)])

    # -- field loading (lazy; skipped entirely on full cache hits) ----------

    def _load_series(self, cfg: SeriesConfig) -> BivariateTimeSeries:
        label = cfg.state_label
        if label in self._series:
            return self._series[label]
        t0 = time.perf_counter()
        steps = []
        if cfg.synthetic is not None:
            s = cfg.synthetic
            spec = default_synthetic_spec(s["n"])
            for t in range(s["steps"]):
                if s["kind"] == "rotation":
                    f = gen_rotation_field(t, spec)
                else:
                    f = gen_scaling_field(t, s["b"], spec)
                steps.append(TimeStep(time_fs=cfg.times_fs[t], field=f, seeds=cfg.seeds))
        else:
            for t, (p1, p2) in enumerate(cfg.cube_steps):
                g1, atoms = load_cube(p1)
                g2, _ = load_cube(p2)
                seeds = cfg.seeds if len(cfg.seeds) else atoms
                steps.append(
                    TimeStep(
                        time_fs=cfg.times_fs[t],
                        field=BivariateField(f1=g1, f2=g2),
                        seeds=seeds,
                    )
                )
        series = BivariateTimeSeries(state_label=label, steps=tuple(steps))
        self._series[label] = series
        self._clock("fields", t0)
        return series

    # -- window -------------------------------------------------------------

    def resolve_window(self) -> RangeWindow:
        if self.m.window != "auto":
            return RangeWindow(*self.m.window)
        key = _hash_obj(
            {
                "series": [self._series_input_hash(c) for c in self.m.series],
                "padding": self.m.padding,
            }
        )
        cached = self.cache.get("window")
        if cached and cached.get("hash") == key:
            return RangeWindow(*cached["value"])
        t0 = time.perf_counter()
        window = global_range_window(
            (self._load_series(c) for c in self.m.series), padding=self.m.padding
        )
        self._clock("window", t0)
        self.cache["window"] = {"hash": key, "value": list(window.as_tuple())}
        return window

    # -- per-step stages ----------------------------------------------------

    def _stage_hit(self, key: str, input_hash: str) -> dict | None:
        entry = self.cache["stages"].get(key)
        if not entry or entry.get("hash") != input_hash:
            return None
        for rel in entry.get("outputs", []):
            if not (self.out / rel).exists():
                return None
        return entry

    def _store_stage(self, key: str, input_hash: str, outputs: list[str], **extra):
        self.cache["stages"][key] = {"hash": input_hash, "outputs": sorted(outputs), **extra}

    def _weighted(self, seeds: AtomList) -> AtomList:
        if self.m.weights_source == "uniform":
            return AtomList(
                tuple(
                    Atom(id=a.id, element=a.element, center=a.center, weight=0.0)
                    for a in seeds
                )
            )
        return seeds

    def run_labels(self, cfg: SeriesConfig, t: int) -> str | None:
        """Write the power-diagram labeling for one step; returns the prefix.

        Cube series discover their seeds only at load time, so the cheap
        static "no segmentation" answer exists just for synthetic series.
        """
        if cfg.synthetic is not None and len(cfg.seeds) == 0:
            return None
        key = f"labels/{cfg.state_label}/t{t:04d}"
        input_hash = _hash_obj(
            {
                "step": self._step_input_hash(cfg, t),
                "weights": self.m.weights_source,
            }
        )
        rel_prefix = key
        if self._stage_hit(key, input_hash):
            entry = self.cache["stages"][key]
            return entry.get("prefix")
        t0 = time.perf_counter()
        step = self._load_series(cfg).steps[t]
        if len(step.seeds) == 0:
            self._clock("segmentation", t0)
            self._store_stage(key, input_hash, [], prefix=None)
            return None
        labels = label_power_diagram(step.field.spec, self._weighted(step.seeds))
        paths = write_labels(labels, self.out / rel_prefix)
        self._clock("segmentation", t0)
        self._store_stage(
            key,
            input_hash,
            [str(p.relative_to(self.out)) for p in paths],
            prefix=rel_prefix,
        )
        return rel_prefix

    def run_csp(self, cfg: SeriesConfig, t: int, window: RangeWindow,
                labels_prefix: str | None) -> dict:
        """Compute/write all scatterplots of one step. Returns the cache entry."""
        key = f"csp/{cfg.state_label}/t{t:04d}"
        input_hash = _hash_obj(
            {
                "step": self._step_input_hash(cfg, t),
                "window": list(window.as_tuple()),
                "res": list(self.m.res),
                "labels": self.cache["stages"].get(f"labels/{cfg.state_label}/t{t:04d}", {}).get("hash"),
            }
        )
        hit = self._stage_hit(key, input_hash)
        if hit:
            return hit
        t0 = time.perf_counter()
        step = self._load_series(cfg).steps[t]
        outputs: list[str] = []
        segments: list[str] = []

        def emit(hist: CSPHistogram, seg_name: str):
            rel = f"csp/{cfg.state_label}/{seg_name}/t{t:04d}"
            paths = write_csp(hist, self.out / rel)
            outputs.extend(str(p.relative_to(self.out)) for p in paths)
            segments.append(seg_name)

        full = compute_csp(
            step.field,
            window,
            self.m.res,
            threads=self.threads,
            state_label=cfg.state_label,
            segment_id=ALL_SEGMENT,
            time_index=t,
        )
        emit(full, ALL_SEGMENT)

        if labels_prefix is not None:
            labels = load_labels(self.out / labels_prefix)
            peels = peel_all(
                step.field,
                labels,
                window,
                self.m.res,
                threads=self.threads,
                state_label=cfg.state_label,
                time_index=t,
            )
            for seg_id in sorted(k for k in peels if k != BOUNDARY_SEGMENT):
                emit(peels[seg_id], str(seg_id))
            emit(peels[BOUNDARY_SEGMENT], BOUNDARY_NAME)

        self._clock("csp", t0)
        self._store_stage(
            key,
            input_hash,
            outputs,
            segments=sorted(segments),
            volume=float(step.field.spec.domain_volume),
        )
        return self.cache["stages"][key]

    # -- global stages -------------------------------------------------------

    def run_moments(self, csp_hashes: dict[str, str]) -> None:
        key = "moments"
        input_hash = _hash_obj({"csp": csp_hashes, "pooling": self.m.pooling})
        if self._stage_hit(key, input_hash):
            return
        t0 = time.perf_counter()
        raw: list[MomentVector] = []
        for cfg in self.m.series:
            entry = self.cache["stages"][f"csp/{cfg.state_label}/t0000"]
            segmented = len(entry["segments"]) > 1
            for t in range(cfg.n_steps):
                entry = self.cache["stages"][f"csp/{cfg.state_label}/t{t:04d}"]
                # moment rows describe real segments when a labeling exists,
                # otherwise the single full-domain scatterplot
                segs = (
                    [s for s in entry["segments"] if s not in (ALL_SEGMENT, BOUNDARY_NAME)]
                    if segmented
                    else [ALL_SEGMENT]
                )
                for seg in sorted(segs, key=_segment_dir_key):
                    hist = load_csp(self.out / f"csp/{cfg.state_label}/{seg}/t{t:04d}")
                    raw.append(csp_moments(hist))
        normalized = normalize_moments(raw, pooling=self.m.pooling)
        times = {
            (cfg.state_label, t): cfg.times_fs[t]
            for cfg in self.m.series
            for t in range(cfg.n_steps)
        }
        rows = build_moment_table(raw, normalized, time_fs=times)
        p1 = write_moments_csv(rows, self.out / "moments.csv")
        p2 = write_moments_json(rows, self.out / "moments.json")
        self._clock("moments", t0)
        self._store_stage(
            key,
            input_hash,
            [str(p.relative_to(self.out)) for p in (p1, p2)],
            rows=len(rows),
        )

    def run_tracks(self) -> None:
        key = "tracks"
        input_hash = _hash_obj({"moments": self.cache["stages"]["moments"]["hash"]})
        if self._stage_hit(key, input_hash):
            return
        t0 = time.perf_counter()
        rows = load_moments_json(self.out / "moments.json")
        normalized = [
            MomentVector(
                m00=r["m00_n"], m20=r["m20_n"], m11=r["m11_n"], m02=r["m02_n"],
                normalized=True,
                state_label=r["state"], segment_id=r["segment"],
                time_index=r["time_index"],
            )
            for r in rows
        ]
        model = fit_pca(normalized)
        times = {
            (r["state"], r["time_index"]): r["time_fs"]
            for r in rows
            if r["time_fs"] is not None
        }
        track_set = build_tracks(model, normalized, time_fs=times or None)
        p1 = write_tracks_json(track_set, self.out / "tracks.json")
        p2 = write_tracks_csv(track_set, self.out / "tracks.csv")
        self._clock("embedding", t0)
        self._store_stage(
            key,
            input_hash,
            [str(p.relative_to(self.out)) for p in (p1, p2)],
            tracks=len(track_set.tracks),
        )

    # -- report ---------------------------------------------------------------

    def content_hash(self) -> str:
        skip = {REPORT_NAME, CACHE_NAME}
        h = hashlib.sha256()
        for path in sorted(self.out.rglob("*")):
            if not path.is_file():
                continue
            rel = str(path.relative_to(self.out))
            if rel in skip:
                continue
            h.update(rel.encode())
            h.update(b"\x00")
            h.update(path.read_bytes())
            h.update(b"\x00")
        return h.hexdigest()

    def build_report(self, window: RangeWindow) -> dict:
        series_info = []
        total_csps = 0
        global_mass = 0.0
        global_volume = 0.0
        max_step_residual = 0.0
        for cfg in self.m.series:
            entry0 = self.cache["stages"][f"csp/{cfg.state_label}/t0000"]
            segs = entry0["segments"]
            segmented = len(segs) > 1
            for t in range(cfg.n_steps):
                entry = self.cache["stages"][f"csp/{cfg.state_label}/t{t:04d}"]
                volume = float(entry["volume"])
                step_mass = 0.0
                for seg in entry["segments"]:
                    if segmented and seg == ALL_SEGMENT:
                        continue  # the unpeeled plot duplicates the peels
                    with open(self.out / f"csp/{cfg.state_label}/{seg}/t{t:04d}.json") as fh:
                        side = json.load(fh)
                    step_mass += float(side["total_mass"]) + float(side["out_of_window"])
                total_csps += len(entry["segments"])
                global_mass += step_mass
                global_volume += volume
                max_step_residual = max(
                    max_step_residual, abs(step_mass - volume) / volume
                )
            track_segments = (
                [s for s in segs if s not in (ALL_SEGMENT, BOUNDARY_NAME)]
                if segmented
                else [ALL_SEGMENT]
            )
            series_info.append(
                {
                    "state": cfg.state_label,
                    "steps": cfg.n_steps,
                    "times_fs": list(cfg.times_fs),
                    "segments": sorted(track_segments, key=_segment_dir_key),
                    "csp_segments": sorted(segs, key=_segment_dir_key),
                }
            )
        report = {
            "schema": "bimoment-run/1",
            "strict": self.strict,
            "window": list(window.as_tuple()),
            "res": list(self.m.res),
            "pooling": self.m.pooling,
            "series": series_info,
            "counts": {
                "series": len(self.m.series),
                "steps": sum(c.n_steps for c in self.m.series),
                "csps": total_csps,
                "moment_rows": self.cache["stages"]["moments"]["rows"],
                "tracks": self.cache["stages"]["tracks"]["tracks"],
            },
            "mass": {
                "global_residual_rel": abs(global_mass - global_volume) / global_volume,
                "max_step_residual_rel": max_step_residual,
            },
            "timings": None
            if self.strict
            else {k: round(v, 6) for k, v in sorted(self.timings.items())},
            "status": "ok",
            "failed_stage": None,
            "failed_key": None,
            "content_hash": self.content_hash(),
        }
        return report

    def save_cache(self):
        _json_dump(self.cache, self.out / CACHE_NAME)

    def write_failure_report(self, exc: PipelineError):
        report = {
            "schema": "bimoment-run/1",
            "strict": self.strict,
            "status": "failed",
            "failed_stage": exc.stage,
            "failed_key": str(exc.key) if exc.key is not None else None,
            "error": str(exc),
            "completed_stages": sorted(self.cache["stages"]),
            "content_hash": None,
        }
        try:
            _json_dump(report, self.out / REPORT_NAME)
            self.save_cache()
        except OSError:
            pass  # the raised error matters more than the breadcrumb


def _segment_dir_key(name: str):
    try:
        return (0, int(name), "")
    except ValueError:
        return (1, 0, name)


def run_manifest(manifest, out_dir=None, strict: bool = False, threads: int = 1) -> dict:
    """Execute the full chain and return the run report dict.

    manifest may be a path or an AnalysisManifest. out_dir overrides the
    manifest's output_dir. Raises ManifestError for bad configuration and
    PipelineError when a stage fails; a failed run still leaves a report
    flagging the partial outputs.
    """
    if not isinstance(manifest, AnalysisManifest):
        manifest = AnalysisManifest.load(manifest)
    out = Path(out_dir) if out_dir is not None else manifest.output_dir
    if out is None:
        raise ManifestError("no output directory: set output_dir or pass out_dir")
    out.mkdir(parents=True, exist_ok=True)

    runner = _Runner(manifest, out, strict, threads)
    stage = "manifest"
    key = None
    try:
        _json_dump(manifest.to_dict(), out / MANIFEST_ECHO)

        stage = "window"
        window = runner.resolve_window()

        csp_hashes: dict[str, str] = {}
        for cfg in manifest.series:
            for t in range(cfg.n_steps):
                key = f"{cfg.state_label}/t{t:04d}"
                stage = "segmentation"
                labels_prefix = runner.run_labels(cfg, t)
                stage = "csp"
                runner.run_csp(cfg, t, window, labels_prefix)
                csp_hashes[key] = runner.cache["stages"][f"csp/{key}"]["hash"]

        key = None
        stage = "moments"
        runner.run_moments(csp_hashes)
        stage = "embedding"
        runner.run_tracks()

        stage = "report"
        report = runner.build_report(window)
        _json_dump(report, out / REPORT_NAME)
        runner.save_cache()
        return report
    except ManifestError:
        raise
    except PipelineError:
        raise
    except Exception as exc:
        err = PipelineError(stage, key, str(exc))
        runner.write_failure_report(err)
        raise err from exc


# ---------------------------------------------------------------------------
# stage-scoped commands (thin, file-level entry points for the CLI)


def generate_cubes(kind: str, steps: int, out_dir, n: int = 64, b: float | None = None,
                   seed: int = 0, state_label: str | None = None) -> Path:
    """Emit a synthetic series as cube file pairs plus a series.json index.

    For the scaling family, b defaults to a seed-derived draw from
    [-0.5, 0]; pass b explicitly for a reproducible fixed shift.
    """
    if kind not in _SYNTH_KINDS:
        raise ManifestError(f"synthetic kind must be one of {_SYNTH_KINDS}")
    if steps < 1:
        raise ManifestError("steps must be >= 1")
    if n < 2:
        raise ManifestError("n must be >= 2")
    if b is None:
        b = float(np.random.default_rng(seed).uniform(-0.5, 0.0)) if kind == "scaling" else 0.0
    if not -0.5 <= b <= 0.0:
        raise ManifestError("b must lie in [-0.5, 0]")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    label = state_label or kind
    spec = default_synthetic_spec(n)
    pairs = []
    for t in range(steps):
        if kind == "rotation":
            f = gen_rotation_field(t, spec)
        else:
            f = gen_scaling_field(t, b, spec)
        p1 = out / f"{label}_f1_t{t:04d}.cube"
        p2 = out / f"{label}_f2_t{t:04d}.cube"
        write_cube(p1, f.f1, comment=f"{label} f1 step {t}")
        write_cube(p2, f.f2, comment=f"{label} f2 step {t}")
        pairs.append([p1.name, p2.name])
    index = {
        "state_label": label,
        "cube_steps": pairs,
        "times_fs": [float(t) for t in range(steps)],
        "synthetic_params": {"kind": kind, "n": n, "b": b},
    }
    index_path = out / "series.json"
    _json_dump(index, index_path)
    return index_path


def segment_cube(f1_cube, out_prefix, weights: str = "covalent-radius") -> tuple[Path, Path]:
    """Label the grid of one cube file by its own atoms."""
    if weights not in _WEIGHT_SOURCES:
        raise ManifestError(f"weights must be one of {_WEIGHT_SOURCES}")
    grid, atoms = load_cube(f1_cube)
    if len(atoms) == 0:
        raise PipelineError("segmentation", str(f1_cube), "cube carries no atoms")
    if weights == "uniform":
        atoms = AtomList(
            tuple(Atom(id=a.id, element=a.element, center=a.center, weight=0.0)
                  for a in atoms)
        )
    labels = label_power_diagram(grid.spec, atoms)
    return write_labels(labels, out_prefix)


def csp_from_cubes(f1_cube, f2_cube, out_prefix, res, window="auto",
                   padding: float = 0.0, labels_prefix=None, threads: int = 1) -> list[Path]:
    """One-step scatterplot command: full CSP, plus peels when labels are given."""
    g1, _ = load_cube(f1_cube)
    g2, _ = load_cube(f2_cube)
    field = BivariateField(f1=g1, f2=g2)
    if isinstance(res, int):
        res = (res, res)
    if window == "auto":
        series = BivariateTimeSeries(
            state_label="cli", steps=(TimeStep(time_fs=0.0, field=field),)
        )
        win = global_range_window([series], padding=padding)
    else:
        win = RangeWindow(*window)
    prefix = Path(out_prefix)
    written: list[Path] = []
    full = compute_csp(field, win, res, threads=threads, segment_id=ALL_SEGMENT)
    written.extend(write_csp(full, prefix.parent / f"{prefix.name}_{ALL_SEGMENT}"))
    if labels_prefix is not None:
        labels = load_labels(labels_prefix)
        peels = peel_all(field, labels, win, res, threads=threads)
        for seg_id, hist in sorted(peels.items()):
            name = BOUNDARY_NAME if seg_id == BOUNDARY_SEGMENT else str(seg_id)
            written.extend(write_csp(hist, prefix.parent / f"{prefix.name}_{name}"))
    return written


def moments_from_csps(csp_prefixes, out_prefix, pooling: str = "per-order") -> tuple[Path, Path]:
    """Reduce stored scatterplots to a joint raw + normalized moment table."""
    if pooling not in _POOLINGS:
        raise ManifestError(f"pooling must be one of {_POOLINGS}")
    prefixes = list(csp_prefixes)
    if not prefixes:
        raise ManifestError("need at least one CSP path prefix")
    raw = [csp_moments(load_csp(p)) for p in prefixes]
    normalized = normalize_moments(raw, pooling=pooling)
    rows = build_moment_table(raw, normalized)
    out = Path(out_prefix)
    return (
        write_moments_csv(rows, out.parent / f"{out.name}.csv"),
        write_moments_json(rows, out.parent / f"{out.name}.json"),
    )


def pca_from_moments(moments_json, out_prefix) -> tuple[Path, Path]:
    """Fit the embedding over a stored moment table and write the tracks."""
    rows = load_moments_json(moments_json)
    if not rows:
        raise ManifestError("moment table is empty")
    normalized = [
        MomentVector(
            m00=r["m00_n"], m20=r["m20_n"], m11=r["m11_n"], m02=r["m02_n"],
            normalized=True,
            state_label=r["state"], segment_id=r["segment"], time_index=r["time_index"],
        )
        for r in rows
    ]
    model = fit_pca(normalized)
    times = {
        (r["state"], r["time_index"]): r["time_fs"]
        for r in rows
        if r["time_fs"] is not None
    }
    track_set = build_tracks(model, normalized, time_fs=times or None)
    out = Path(out_prefix)
    return (
        write_tracks_json(track_set, out.parent / f"{out.name}.json"),
        write_tracks_csv(track_set, out.parent / f"{out.name}.csv"),
    )


def fiber_from_cubes(f1_cube, f2_cube, polygon_json, out_path, fmt: str = "obj") -> Path:
    """Extract the preimage surface of a stored control polygon."""
    with open(polygon_json) as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or "vertices" not in data:
        raise ManifestError("polygon JSON needs a vertices list")
    window = None
    if data.get("window") is not None:
        w = data["window"]
        window = RangeWindow(w[0], w[1], w[2], w[3])
    poly = ControlPolygon(data["vertices"], window=window)
    g1, _ = load_cube(f1_cube)
    g2, _ = load_cube(f2_cube)
    mesh = extract_fiber_surface(BivariateField(f1=g1, f2=g2), poly)
    return export_mesh(mesh, out_path, fmt)


def render_csp_file(csp_prefix, out_png) -> Path:
    return render_csp_png(load_csp(csp_prefix), out_png)
