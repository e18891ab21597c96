"""Shape descriptors for continuous scatterplots.

Raw image moments over window-normalized bin centers, the log-density
moment vector [M00, M20, M11, M02], global min-max normalization pooled
by moment order, and the principal-axis orientation of a histogram.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .csp import CSPHistogram

MOMENT_NAMES = ("m00", "m20", "m11", "m02")
_POOLINGS = ("per-order", "per-component")


@dataclass(frozen=True)
class MomentVector:
    """Length-4 CSP descriptor with provenance.

    Raw vectors come out of csp_moments; normalized ones only out of
    normalize_moments, which rescales every component into [0, 1].
    """

    m00: float
    m20: float
    m11: float
    m02: float
    normalized: bool = False
    state_label: str | None = None
    segment_id: int | str | None = None
    time_index: int | None = None

    def __post_init__(self):
        vals = (self.m00, self.m20, self.m11, self.m02)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"moment components must be finite, got {vals}")
        if self.normalized:
            if not all(0.0 <= v <= 1.0 for v in vals):
                raise ValueError(f"normalized moments must lie in [0,1], got {vals}")
        elif self.m00 < 0.0:
            raise ValueError(f"raw m00 must be >= 0, got {self.m00}")

    def as_array(self) -> np.ndarray:
        return np.array([self.m00, self.m20, self.m11, self.m02], dtype=np.float64)

    @property
    def provenance(self):
        return (self.state_label, self.segment_id, self.time_index)


def raw_moments(image, i: int, j: int) -> float:
    """M_ij = sum over pixels of x^i y^j I(x, y).

    Coordinates are bin centers on a [0,1]^2 normalization of the image
    extent (x along columns, y along rows), so values are comparable
    across resolutions.
    """
    img = np.asarray(image, dtype=np.float64)
    ny, nx = img.shape
    x = (np.arange(nx) + 0.5) / nx
    y = (np.arange(ny) + 0.5) / ny
    return float(((y**j)[:, None] * (x**i)[None, :] * img).sum())


def csp_moments(hist: CSPHistogram) -> MomentVector:
    """Raw moment vector of log(1 + density), provenance copied over.

    Histogram bins store integrated spatial volume; the log argument is
    the density proper, volume per unit window area. Dividing by bin
    area keeps the vector stable as resolution changes, and keeps the
    log compression meaningful: bin volumes shrink toward zero with
    finer binning, which would silently linearize the weights.
    """
    win = hist.window
    R1, R2 = hist.res
    bin_area = win.width1 * win.width2 / (R1 * R2)
    img = np.log1p(hist.density / bin_area)
    return MomentVector(
        m00=raw_moments(img, 0, 0),
        m20=raw_moments(img, 2, 0),
        m11=raw_moments(img, 1, 1),
        m02=raw_moments(img, 0, 2),
        state_label=hist.state_label,
        segment_id=hist.segment_id,
        time_index=hist.time_index,
    )


def normalize_moments(vectors, pooling: str = "per-order") -> list[MomentVector]:
    """Global min-max rescale of a batch of raw vectors.

    per-order pools all components of equal order i+j, so the one order-2
    pool spans every m20, m11 and m02 in the batch; per-component rescales
    each of the four components against its own pool. A pool whose min
    equals its max maps to 0 by convention, and a single input vector,
    having no population to compare against, maps to all zeros too.
    """
    vectors = list(vectors)
    if not vectors:
        raise ValueError("normalize_moments needs at least one vector")
    if any(v.normalized for v in vectors):
        raise ValueError("inputs are already normalized; pass raw vectors only")
    if pooling not in _POOLINGS:
        raise ValueError(f"pooling must be one of {_POOLINGS}, got {pooling!r}")
    arr = np.array([v.as_array() for v in vectors])
    out = np.zeros_like(arr)
    pools = ((0,), (1, 2, 3)) if pooling == "per-order" else ((0,), (1,), (2,), (3,))
    if len(vectors) > 1:
        for cols in pools:
            block = arr[:, cols]
            lo = block.min()
            hi = block.max()
            if hi > lo:
                out[:, cols] = (block - lo) / (hi - lo)
    return [
        replace(
            v,
            m00=float(row[0]),
            m20=float(row[1]),
            m11=float(row[2]),
            m02=float(row[3]),
            normalized=True,
        )
        for v, row in zip(vectors, out)
    ]


def principal_axis_angle(hist: CSPHistogram) -> float:
    """Orientation of the histogram mass in degrees, range (-90, 90].

    Computed from unnormalized second central moments of the density
    itself (no log), over window-normalized bin centers. Mass spread
    along the diagonal u = v reports 45.
    """
    d = hist.density
    total = d.sum()
    if total <= 0.0:
        raise ValueError("principal axis is undefined for an empty histogram")
    R2, R1 = d.shape
    x = (np.arange(R1) + 0.5) / R1
    y = (np.arange(R2) + 0.5) / R2
    wx = d.sum(axis=0)
    wy = d.sum(axis=1)
    xb = (wx * x).sum() / total
    yb = (wy * y).sum() / total
    mu20 = (wx * (x - xb) ** 2).sum()
    mu02 = (wy * (y - yb) ** 2).sum()
    mu11 = ((d * (y - yb)[:, None]) * (x - xb)[None, :]).sum()
    return float(np.degrees(0.5 * np.arctan2(2.0 * mu11, mu20 - mu02)))


# ---------------------------------------------------------------------------
# tabular export


def _segment_sort_key(segment_id):
    if isinstance(segment_id, str):
        return (1, 0, segment_id)
    return (0, int(segment_id), "")


def build_moment_table(raw, normalized, time_fs=None) -> list[dict]:
    """Pair raw and normalized vectors into export rows.

    raw and normalized must align element-wise (normalize_moments keeps
    order). time_fs optionally maps (state_label, time_index) to a
    physical time stamp.
    """
    raw = list(raw)
    normalized = list(normalized)
    if len(raw) != len(normalized):
        raise ValueError("raw and normalized vector lists differ in length")
    rows = []
    for rv, nv in zip(raw, normalized):
        if rv.provenance != nv.provenance:
            raise ValueError(f"provenance mismatch: {rv.provenance} vs {nv.provenance}")
        if rv.normalized or not nv.normalized:
            raise ValueError("expected (raw, normalized) vector pairs")
        fs = None
        if time_fs is not None:
            fs = time_fs.get((rv.state_label, rv.time_index))
        rows.append(
            {
                "state": rv.state_label,
                "segment": rv.segment_id,
                "time_index": rv.time_index,
                "time_fs": fs,
                "m00": rv.m00,
                "m20": rv.m20,
                "m11": rv.m11,
                "m02": rv.m02,
                "m00_n": nv.m00,
                "m20_n": nv.m20,
                "m11_n": nv.m11,
                "m02_n": nv.m02,
            }
        )
    rows.sort(
        key=lambda r: (
            r["state"] or "",
            _segment_sort_key(r["segment"]),
            r["time_index"] if r["time_index"] is not None else -1,
        )
    )
    return rows


_CSV_COLUMNS = (
    "state", "segment", "time_index", "time_fs",
    "m00", "m20", "m11", "m02", "m00_n", "m20_n", "m11_n", "m02_n",
)


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_moments_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_CSV_COLUMNS)
        for r in rows:
            w.writerow([_csv_cell(r[c]) for c in _CSV_COLUMNS])
    return path


def write_moments_json(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump({"rows": rows}, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def load_moments_json(path) -> list[dict]:
    with open(path) as fh:
        return json.load(fh)["rows"]
