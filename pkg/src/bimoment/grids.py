"""Core grid and field containers.

All volumetric data lives on uniform, axis-aligned rectilinear grids. Scalar
values are stored as flat float64 arrays in x-fastest order, i.e. the flat
index of vertex (ix, iy, iz) is ``ix + nx * (iy + ny * iz)``. File formats
with other orderings are remapped on load.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GridSpec",
    "ScalarGrid",
    "BivariateField",
    "TimeStep",
    "BivariateTimeSeries",
    "Atom",
    "AtomList",
    "RangeWindow",
    "flat_index",
    "global_range_window",
]


def flat_index(dims: Sequence[int], ix, iy, iz):
    """Flat vertex index for (ix, iy, iz), x-fastest."""
    nx, ny, _ = dims
    return ix + nx * (iy + ny * iz)


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a uniform grid: vertex counts, origin and spacing per axis."""

    dims: tuple[int, int, int]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        origin = tuple(float(v) for v in self.origin)
        spacing = tuple(float(v) for v in self.spacing)
        if len(dims) != 3 or len(origin) != 3 or len(spacing) != 3:
            raise ValueError("GridSpec requires 3 dims, 3 origin and 3 spacing values")
        if any(d < 1 for d in dims):
            raise ValueError(f"grid dims must be positive, got {dims}")
        if any(not np.isfinite(v) for v in origin):
            raise ValueError("grid origin must be finite")
        if any(s <= 0 or not np.isfinite(s) for s in spacing):
            raise ValueError(f"grid spacing must be positive, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)

    @property
    def n_vertices(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def n_cells(self) -> int:
        nx, ny, nz = self.dims
        return max(nx - 1, 0) * max(ny - 1, 0) * max(nz - 1, 0)

    @property
    def cell_volume(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    @property
    def domain_volume(self) -> float:
        """Volume covered by the cells (zero for degenerate single-slab axes)."""
        nx, ny, nz = self.dims
        sx, sy, sz = self.spacing
        return (nx - 1) * sx * ((ny - 1) * sy) * ((nz - 1) * sz)

    def axis_coords(self, axis: int) -> np.ndarray:
        n = self.dims[axis]
        return self.origin[axis] + self.spacing[axis] * np.arange(n)

    def vertex_coords(self, flat: np.ndarray) -> np.ndarray:
        """World coordinates (n, 3) for flat vertex indices."""
        flat = np.asarray(flat)
        nx, ny, _ = self.dims
        ix = flat % nx
        iy = (flat // nx) % ny
        iz = flat // (nx * ny)
        out = np.empty(flat.shape + (3,), dtype=np.float64)
        out[..., 0] = self.origin[0] + self.spacing[0] * ix
        out[..., 1] = self.origin[1] + self.spacing[1] * iy
        out[..., 2] = self.origin[2] + self.spacing[2] * iz
        return out


@dataclass(frozen=True)
class ScalarGrid:
    """A scalar field sampled at grid vertices, flat x-fastest storage."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            vals = vals.reshape(-1)
        if vals.shape[0] != self.spec.n_vertices:
            raise ValueError(
                f"value count {vals.shape[0]} does not match grid "
                f"({self.spec.n_vertices} vertices for dims {self.spec.dims})"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("scalar grid values must be finite")
        vals = np.ascontiguousarray(vals)
        vals.flags.writeable = False  # immutable after construction
        object.__setattr__(self, "values", vals)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.spec.dims

    def value_at(self, ix: int, iy: int, iz: int) -> float:
        return float(self.values[flat_index(self.spec.dims, ix, iy, iz)])

    def as_array3d(self) -> np.ndarray:
        """View shaped (nx, ny, nz); A[ix, iy, iz] matches value_at."""
        return self.values.reshape(self.spec.dims, order="F")

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True)
class BivariateField:
    """Two scalar fields on the same grid, forming a map into range space."""

    f1: ScalarGrid
    f2: ScalarGrid

    def __post_init__(self):
        if self.f1.spec != self.f2.spec:
            raise ValueError("bivariate components must share one grid")

    @property
    def spec(self) -> GridSpec:
        return self.f1.spec


@dataclass(frozen=True)
class Atom:
    """A labeled seed point. Weight is in squared-length units."""

    id: int
    element: str
    center: tuple[float, float, float]
    weight: float

    def __post_init__(self):
        if self.id < 0:
            raise ValueError("atom id must be non-negative")
        if self.weight < 0 or not np.isfinite(self.weight):
            raise ValueError(f"atom weight must be finite and >= 0, got {self.weight}")
        center = tuple(float(c) for c in self.center)
        if len(center) != 3 or any(not np.isfinite(c) for c in center):
            raise ValueError("atom center must be 3 finite floats")
        object.__setattr__(self, "center", center)


@dataclass(frozen=True)
class AtomList:
    """Ordered seed set with unique ids."""

    atoms: tuple[Atom, ...] = ()

    def __post_init__(self):
        atoms = tuple(self.atoms)
        ids = [a.id for a in atoms]
        if len(set(ids)) != len(ids):
            raise ValueError("atom ids must be unique")
        object.__setattr__(self, "atoms", atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    def sorted_by_id(self) -> "AtomList":
        return AtomList(tuple(sorted(self.atoms, key=lambda a: a.id)))

    @property
    def ids(self) -> list[int]:
        return [a.id for a in self.atoms]

    def centers(self) -> np.ndarray:
        return np.array([a.center for a in self.atoms], dtype=np.float64).reshape(-1, 3)

    def weights(self) -> np.ndarray:
        return np.array([a.weight for a in self.atoms], dtype=np.float64)


@dataclass(frozen=True)
class TimeStep:
    time_fs: float
    field: BivariateField
    seeds: AtomList = field(default_factory=AtomList)


@dataclass(frozen=True)
class BivariateTimeSeries:
    """A labeled sequence of bivariate fields with strictly increasing times."""

    state_label: str
    steps: tuple[TimeStep, ...]

    def __post_init__(self):
        steps = tuple(self.steps)
        if not steps:
            raise ValueError("time series must contain at least one step")
        times = [s.time_fs for s in steps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("time stamps must be strictly increasing")
        spec = steps[0].field.spec
        for s in steps[1:]:
            if s.field.spec.dims != spec.dims:
                raise ValueError("all steps of a series must share grid dims")
        object.__setattr__(self, "steps", steps)

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class RangeWindow:
    """Axis-aligned rectangle in range space, min1 < max1 and min2 < max2."""

    min1: float
    max1: float
    min2: float
    max2: float

    def __post_init__(self):
        vals = (self.min1, self.max1, self.min2, self.max2)
        if any(not np.isfinite(v) for v in vals):
            raise ValueError("window bounds must be finite")
        if not (self.min1 < self.max1 and self.min2 < self.max2):
            raise ValueError(f"degenerate range window {vals}")

    @property
    def width1(self) -> float:
        return self.max1 - self.min1

    @property
    def width2(self) -> float:
        return self.max2 - self.min2

    def normalize(self, u, v):
        """Map range coordinates into window-normalized [0, 1]^2."""
        return (np.asarray(u) - self.min1) / self.width1, (
            np.asarray(v) - self.min2
        ) / self.width2

    def contains(self, u, v):
        return (
            (np.asarray(u) >= self.min1)
            & (np.asarray(u) <= self.max1)
            & (np.asarray(v) >= self.min2)
            & (np.asarray(v) <= self.max2)
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.min1, self.max1, self.min2, self.max2)


def _padded_channel(lo: float, hi: float, padding: float) -> tuple[float, float]:
    width = hi - lo
    if width <= 0.0:
        # constant channel: unit-width window centered on the value
        return lo - 0.5, hi + 0.5
    return lo - padding * width, hi + padding * width


def global_range_window(
    series_list: Iterable[BivariateTimeSeries], padding: float = 0.0
) -> RangeWindow:
    """Joint (f1, f2) bounds over every step of every series, padded per channel.

    ``padding`` is a fraction of each channel's width. A channel whose values
    are all identical gets a unit-width window centered on that value.
    """
    if padding < 0:
        raise ValueError("padding must be >= 0")
    lo1 = lo2 = np.inf
    hi1 = hi2 = -np.inf
    n = 0
    for series in series_list:
        for step in series.steps:
            lo1 = min(lo1, step.field.f1.min())
            hi1 = max(hi1, step.field.f1.max())
            lo2 = min(lo2, step.field.f2.min())
            hi2 = max(hi2, step.field.f2.max())
            n += 1
    if n == 0:
        raise ValueError("no fields supplied")
    min1, max1 = _padded_channel(lo1, hi1, padding)
    min2, max2 = _padded_channel(lo2, hi2, padding)
    return RangeWindow(min1, max1, min2, max2)
