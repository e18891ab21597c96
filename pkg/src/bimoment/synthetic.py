"""Analytic benchmark fields.

Both families share f1(x, y, z) = x and differ in the second component:

* rotation:  f2 = a_t * y + (1 - a_t) * x   with a_t = 0.01 + 0.02 * t
* scaling:   f2 = a_t * (x + b)             with a_t = 1.00 - 0.02 * t

The fields only depend on (x, y), so every z slab carries the same values;
grids still need at least two slabs so the domain has nonzero volume.
"""

from __future__ import annotations

import numpy as np

from .grids import (
    AtomList,
    BivariateField,
    BivariateTimeSeries,
    GridSpec,
    ScalarGrid,
    TimeStep,
)

__all__ = [
    "rotation_coefficient",
    "scaling_coefficient",
    "gen_rotation_field",
    "gen_scaling_field",
    "gen_series",
    "default_synthetic_spec",
]


def default_synthetic_spec(n: int = 64) -> GridSpec:
    """Unit-cube grid with n vertices per axis."""
    if n < 2:
        raise ValueError("synthetic grids need at least 2 vertices per axis")
    h = 1.0 / (n - 1)
    return GridSpec(dims=(n, n, n), origin=(0.0, 0.0, 0.0), spacing=(h, h, h))


def rotation_coefficient(t: int) -> float:
    return 0.01 + 0.02 * t


def scaling_coefficient(t: int) -> float:
    return 1.0 - 0.02 * t


def _check_step(t: int) -> int:
    t = int(t)
    if t < 0:
        raise ValueError(f"time step must be >= 0, got {t}")
    return t


def _xy_grids(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    # broadcast world x and y over the flat x-fastest layout
    nx, ny, nz = spec.dims
    x = spec.axis_coords(0)
    y = spec.axis_coords(1)
    x3 = np.broadcast_to(x[:, None, None], (nx, ny, nz))
    y3 = np.broadcast_to(y[None, :, None], (nx, ny, nz))
    return x3.reshape(-1, order="F"), y3.reshape(-1, order="F")


def gen_rotation_field(t: int, grid_spec: GridSpec | None = None) -> BivariateField:
    """Field pair (x, a_t*y + (1-a_t)*x) at integer step t."""
    t = _check_step(t)
    spec = grid_spec if grid_spec is not None else default_synthetic_spec()
    a = rotation_coefficient(t)
    x, y = _xy_grids(spec)
    return BivariateField(
        f1=ScalarGrid(spec, x),
        f2=ScalarGrid(spec, a * y + (1.0 - a) * x),
    )


def gen_scaling_field(
    t: int, b: float = 0.0, grid_spec: GridSpec | None = None
) -> BivariateField:
    """Field pair (x, a_t*(x + b)) at integer step t.

    b shifts the scaled component; expected in [-0.5, 0].
    """
    t = _check_step(t)
    b = float(b)
    if not (-0.5 <= b <= 0.0):
        raise ValueError(f"b must lie in [-0.5, 0], got {b}")
    spec = grid_spec if grid_spec is not None else default_synthetic_spec()
    a = scaling_coefficient(t)
    x, _ = _xy_grids(spec)
    return BivariateField(
        f1=ScalarGrid(spec, x),
        f2=ScalarGrid(spec, a * (x + b)),
    )


def gen_series(
    kind: str,
    steps: int = 50,
    b: float = 0.0,
    grid_spec: GridSpec | None = None,
    state_label: str | None = None,
) -> BivariateTimeSeries:
    """Build a full synthetic series; one step per integer t in [0, steps)."""
    if steps < 1:
        raise ValueError("need at least one step")
    spec = grid_spec if grid_spec is not None else default_synthetic_spec()
    if kind == "rotation":
        fields = [gen_rotation_field(t, spec) for t in range(steps)]
        label = state_label or "rotation"
    elif kind == "scaling":
        fields = [gen_scaling_field(t, b, spec) for t in range(steps)]
        label = state_label or "scaling"
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    return BivariateTimeSeries(
        state_label=label,
        steps=tuple(
            TimeStep(time_fs=float(t), field=f, seeds=AtomList())
            for t, f in enumerate(fields)
        ),
    )
