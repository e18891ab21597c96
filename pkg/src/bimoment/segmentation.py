"""Power-diagram vertex labeling.

Each grid vertex v is assigned to the seed minimizing the power distance
``|v - c_i|^2 - w_i``. Ties go to the smallest atom id, so labeling is
deterministic. Straddling tetrahedra (mixed vertex labels) are not resolved
here; the peel stage routes them to a reserved boundary pseudo-segment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grids import AtomList, GridSpec

__all__ = [
    "BOUNDARY_SEGMENT",
    "UNASSIGNED",
    "LabelGrid",
    "label_power_diagram",
    "segment_vertex_counts",
    "write_labels",
    "load_labels",
]

# reserved ids; neither may collide with atom ids (which are >= 0)
BOUNDARY_SEGMENT = -2
UNASSIGNED = -1

_VERTEX_CHUNK = 1 << 18


@dataclass(frozen=True)
class LabelGrid:
    """Per-vertex segment labels plus the seed ids that produced them."""

    spec: GridSpec
    labels: np.ndarray  # int32, flat x-fastest
    atom_ids: tuple[int, ...]

    def __post_init__(self):
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int32).reshape(-1))
        if labels.shape[0] != self.spec.n_vertices:
            raise ValueError("label count does not match grid")
        valid = set(self.atom_ids) | {UNASSIGNED}
        present = set(np.unique(labels).tolist())
        if not present <= valid:
            raise ValueError(f"labels contain unknown ids {sorted(present - valid)}")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "atom_ids", tuple(int(i) for i in self.atom_ids))


def label_power_diagram(grid_spec: GridSpec, atoms: AtomList) -> LabelGrid:
    """Label every vertex with the power-nearest atom id.

    Adding the same constant to all weights leaves the labeling unchanged.
    """
    if not isinstance(grid_spec, GridSpec):
        grid_spec = grid_spec.spec
    n = grid_spec.n_vertices
    if len(atoms) == 0:
        raise ValueError("power-diagram labeling needs at least one seed atom")

    ordered = atoms.sorted_by_id()  # argmin picks first minimum -> smallest id
    centers = ordered.centers()
    weights = ordered.weights()
    ids = np.asarray(ordered.ids, dtype=np.int32)

    labels = np.empty(n, dtype=np.int32)
    flat = np.arange(n, dtype=np.int64)
    for start in range(0, n, _VERTEX_CHUNK):
        idx = flat[start : start + _VERTEX_CHUNK]
        coords = grid_spec.vertex_coords(idx)
        d2 = ((coords[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        d2 -= weights[None, :]
        labels[start : start + _VERTEX_CHUNK] = ids[np.argmin(d2, axis=1)]
    return LabelGrid(grid_spec, labels, tuple(int(i) for i in ids))


def segment_vertex_counts(labels: LabelGrid) -> dict[int, int]:
    """Vertex count per seed id; seeds that captured nothing report 0."""
    counts = {int(i): 0 for i in labels.atom_ids}
    uniq, cnt = np.unique(labels.labels, return_counts=True)
    for u, c in zip(uniq.tolist(), cnt.tolist()):
        if u in counts:
            counts[u] = int(c)
    return counts


def write_labels(labels: LabelGrid, path_prefix) -> tuple[Path, Path]:
    """Persist as flat int32 binary plus a JSON sidecar."""
    prefix = Path(path_prefix)
    bin_path = prefix.with_suffix(".bin")
    json_path = prefix.with_suffix(".json")
    prefix.parent.mkdir(parents=True, exist_ok=True)
    labels.labels.tofile(bin_path)
    sidecar = {
        "dims": list(labels.spec.dims),
        "origin": list(labels.spec.origin),
        "spacing": list(labels.spec.spacing),
        "dtype": "int32",
        "order": "x-fastest",
        "id_map": {str(i): i for i in labels.atom_ids},
        "reserved": {"unassigned": UNASSIGNED, "boundary": BOUNDARY_SEGMENT},
    }
    with open(json_path, "w") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return bin_path, json_path


def load_labels(path_prefix) -> LabelGrid:
    prefix = Path(path_prefix)
    with open(prefix.with_suffix(".json")) as fh:
        sidecar = json.load(fh)
    spec = GridSpec(
        dims=tuple(sidecar["dims"]),
        origin=tuple(sidecar["origin"]),
        spacing=tuple(sidecar["spacing"]),
    )
    raw = np.fromfile(prefix.with_suffix(".bin"), dtype=np.int32)
    ids = tuple(sorted(int(v) for v in sidecar["id_map"].values()))
    return LabelGrid(spec, raw, ids)
