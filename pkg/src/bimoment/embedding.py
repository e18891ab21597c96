"""Global PCA over moment vectors and per-segment track construction.

The 4x4 eigenproblem is solved once over every vector in the analysis;
tracks are time-ordered projections per (state, segment) carrying all
four principal scores so any axis pair can be viewed without refitting.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .moments import MOMENT_NAMES, MomentVector, _segment_sort_key

PC_NAMES = ("PC1", "PC2", "PC3", "PC4")
_EIG_FLOOR = -1e-12


@dataclass(frozen=True)
class PCAModel:
    """Mean, orthonormal axes (rows, descending variance) and eigenvalues."""

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(4)
        comp = np.asarray(self.components, dtype=np.float64).reshape(4, 4)
        eig = np.asarray(self.eigenvalues, dtype=np.float64).reshape(4)
        gram = comp @ comp.T
        if np.abs(gram - np.eye(4)).max() > 1e-10:
            raise ValueError("component rows must be orthonormal")
        if np.any(np.diff(eig) > 0) or np.any(eig < 0):
            raise ValueError("eigenvalues must be non-negative and descending")
        for arr in (mean, comp, eig):
            arr.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comp)
        object.__setattr__(self, "eigenvalues", eig)

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        if total <= 0.0:
            return np.zeros(4)
        return self.eigenvalues / total


def _as_matrix(vectors) -> np.ndarray:
    rows = [
        v.as_array() if isinstance(v, MomentVector) else np.asarray(v, dtype=np.float64)
        for v in vectors
    ]
    X = np.array(rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 4:
        raise ValueError(f"expected 4-component vectors, got shape {X.shape}")
    return X


def fit_pca(vectors) -> PCAModel:
    """Eigendecomposition of the population covariance (divide by n).

    Inputs are put into a canonical sort order before any accumulation,
    so the fitted model is bitwise identical under permutation of the
    input list. Axis signs are fixed by making the largest-magnitude
    entry of each row positive.
    """
    X = _as_matrix(vectors)
    n = X.shape[0]
    if n < 2:
        raise ValueError(f"fit_pca needs at least 2 vectors, got {n}")
    X = X[np.lexsort((X[:, 3], X[:, 2], X[:, 1], X[:, 0]))]
    mean = X.mean(axis=0)
    centered = X - mean
    cov = (centered.T @ centered) / n
    w, V = np.linalg.eigh(cov)
    if w.min() < _EIG_FLOOR * max(1.0, np.abs(w).max()):
        raise ValueError(f"covariance eigenvalue {w.min()} below PSD tolerance")
    w = np.clip(w[::-1], 0.0, None)
    axes = V[:, ::-1].T.copy()
    for r in range(4):
        if axes[r, np.argmax(np.abs(axes[r]))] < 0:
            axes[r] = -axes[r]
    return PCAModel(mean=mean, components=axes, eigenvalues=w)


def project(model: PCAModel, v) -> np.ndarray:
    """PC scores components @ (v - mean); accepts one vector or a batch."""
    arr = np.asarray(v, dtype=np.float64)
    return (arr - model.mean) @ model.components.T


@dataclass(frozen=True)
class TrackPoint:
    time_index: int
    time_fs: float | None
    scores: np.ndarray  # (4,) PC scores


@dataclass(frozen=True)
class TrackSet:
    """Time-ordered PC-score tracks keyed by (state_label, segment_id)."""

    model: PCAModel
    tracks: dict

    @property
    def n_points(self) -> int:
        return sum(len(pts) for pts in self.tracks.values())


def build_tracks(model: PCAModel, vectors, time_fs=None) -> TrackSet:
    """Group normalized vectors by (state, segment), project, order by time.

    time_fs optionally maps (state_label, time_index) to a physical time.
    Duplicate (state, segment, time) provenance is an error, as is any
    vector with missing provenance or one that skipped normalization.
    """
    grouped: dict = {}
    seen = set()
    for v in vectors:
        if not isinstance(v, MomentVector) or not v.normalized:
            raise ValueError("build_tracks expects normalized MomentVector inputs")
        if v.state_label is None or v.segment_id is None or v.time_index is None:
            raise ValueError(f"vector has incomplete provenance {v.provenance}")
        key = (v.state_label, v.segment_id)
        full = (v.state_label, v.segment_id, v.time_index)
        if full in seen:
            raise ValueError(f"duplicate (state, segment, time) key {full}")
        seen.add(full)
        grouped.setdefault(key, []).append(v)
    tracks = {}
    for key in sorted(grouped, key=lambda k: (k[0], _segment_sort_key(k[1]))):
        pts = []
        for v in sorted(grouped[key], key=lambda v: v.time_index):
            fs = time_fs.get((v.state_label, v.time_index)) if time_fs else None
            scores = project(model, v.as_array())
            scores.flags.writeable = False
            pts.append(TrackPoint(v.time_index, fs, scores))
        tracks[key] = pts
    return TrackSet(model=model, tracks=tracks)


def track_metrics(track_set: TrackSet, axis_pair=(1, 2)) -> list[dict]:
    """Per-track arc length, bounding-box area and largest single step.

    Metrics are taken in the 2D plane of the chosen PC axes (1-based).
    The report is sorted by descending bbox_area, ties broken by key.
    """
    a, b = (int(axis_pair[0]), int(axis_pair[1]))
    if not (1 <= a <= 4 and 1 <= b <= 4):
        raise ValueError(f"axis pair must be within 1..4, got {axis_pair}")
    rows = []
    for (state, segment), pts in track_set.tracks.items():
        P = np.array([[p.scores[a - 1], p.scores[b - 1]] for p in pts])
        if P.shape[0] >= 2:
            steps = np.hypot(*np.diff(P, axis=0).T)
            arc = float(steps.sum())
            max_step = float(steps.max())
        else:
            arc = max_step = 0.0
        ext = P.max(axis=0) - P.min(axis=0)
        rows.append(
            {
                "state": state,
                "segment": segment,
                "arc_length": arc,
                "bbox_area": float(ext[0] * ext[1]),
                "max_step": max_step,
            }
        )
    rows.sort(
        key=lambda r: (-r["bbox_area"], r["state"], _segment_sort_key(r["segment"]))
    )
    return rows


# ---------------------------------------------------------------------------
# persistence


def _model_dict(model: PCAModel) -> dict:
    return {
        "mean": model.mean.tolist(),
        "components": model.components.tolist(),
        "eigenvalues": model.eigenvalues.tolist(),
        "explained_variance_ratio": model.explained_variance_ratio.tolist(),
        "moment_names": list(MOMENT_NAMES),
    }


def write_tracks_json(track_set: TrackSet, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "model": _model_dict(track_set.model),
        "score_names": list(PC_NAMES),
        "tracks": [
            {
                "state": state,
                "segment": segment,
                "points": [
                    {
                        "time_index": p.time_index,
                        "time_fs": p.time_fs,
                        "scores": p.scores.tolist(),
                    }
                    for p in pts
                ],
            }
            for (state, segment), pts in track_set.tracks.items()
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def load_track_set(path) -> TrackSet:
    with open(path) as fh:
        doc = json.load(fh)
    m = doc["model"]
    model = PCAModel(
        mean=np.array(m["mean"]),
        components=np.array(m["components"]),
        eigenvalues=np.array(m["eigenvalues"]),
    )
    tracks = {}
    for t in doc["tracks"]:
        seg = t["segment"]
        pts = []
        for p in t["points"]:
            scores = np.asarray(p["scores"], dtype=np.float64)
            scores.flags.writeable = False
            pts.append(TrackPoint(int(p["time_index"]), p["time_fs"], scores))
        tracks[(t["state"], seg)] = pts
    return TrackSet(model=model, tracks=tracks)


_TRACK_CSV_COLUMNS = ("state", "segment", "time_index", "time_fs", *[n.lower() for n in PC_NAMES])


def write_tracks_csv(track_set: TrackSet, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_TRACK_CSV_COLUMNS)
        for (state, segment), pts in track_set.tracks.items():
            for p in pts:
                w.writerow(
                    [
                        state,
                        segment,
                        p.time_index,
                        "" if p.time_fs is None else format(p.time_fs, ".17g"),
                        *[format(s, ".17g") for s in p.scores],
                    ]
                )
    return path
