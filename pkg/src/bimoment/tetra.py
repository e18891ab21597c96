"""Freudenthal six-tetrahedra decomposition of hexahedral cells.

Every cell is split along its main diagonal (low corner to high corner) into
the six tetrahedra given by the axis-order paths low -> +e_i -> +e_j -> high.
Using the same split in every cell makes the induced diagonals on shared
faces agree between neighboring cells.
"""

from __future__ import annotations

import numpy as np

from .grids import GridSpec

__all__ = ["TETS_PER_CELL", "tet_decompose", "cell_tets", "iter_slab_chunks"]

TETS_PER_CELL = 6

# cube corners indexed by bit pattern (x=1, y=2, z=4); each tet walks one
# axis-order permutation from corner 0 to corner 7
_TET_CORNERS = np.array(
    [
        [0, 1, 3, 7],  # x, y, z
        [0, 1, 5, 7],  # x, z, y
        [0, 2, 3, 7],  # y, x, z
        [0, 2, 6, 7],  # y, z, x
        [0, 4, 5, 7],  # z, x, y
        [0, 4, 6, 7],  # z, y, x
    ],
    dtype=np.int64,
)


def _corner_offsets(dims) -> np.ndarray:
    nx, ny, _ = dims
    c = np.arange(8)
    return (c & 1) + nx * (((c >> 1) & 1) + ny * ((c >> 2) & 1))


def tet_decompose(dims, cell) -> np.ndarray:
    """Vertex index quadruples (6, 4) for one cell.

    ``cell`` is the (ix, iy, iz) index of the cell's low corner. Indices are
    flat x-fastest vertex indices.
    """
    nx, ny, nz = dims
    ix, iy, iz = cell
    if not (0 <= ix < nx - 1 and 0 <= iy < ny - 1 and 0 <= iz < nz - 1):
        raise ValueError(f"cell {cell} out of range for dims {tuple(dims)}")
    base = ix + nx * (iy + ny * iz)
    offsets = _corner_offsets(dims)
    return base + offsets[_TET_CORNERS]


def cell_tets(dims, z0: int, z1: int) -> np.ndarray:
    """Tet vertex indices (n_tets, 4) for all cells with base slab in [z0, z1).

    Cells are ordered x-fastest, tets in table order within each cell, so the
    global tet ordering is deterministic.
    """
    nx, ny, nz = dims
    z1 = min(z1, nz - 1)
    if z0 >= z1 or nx < 2 or ny < 2:
        return np.empty((0, 4), dtype=np.int64)
    ix = np.arange(nx - 1)
    iy = np.arange(ny - 1)
    iz = np.arange(z0, z1)
    base = (
        ix[None, None, :]
        + nx * (iy[None, :, None] + ny * iz[:, None, None])
    ).reshape(-1)
    offsets = _corner_offsets(dims)
    quads = base[:, None, None] + offsets[_TET_CORNERS][None, :, :]
    return quads.reshape(-1, 4)


def iter_slab_chunks(spec: GridSpec, target_tets: int = 200_000):
    """Yield (z0, z1) slab ranges sized to roughly target_tets tets each."""
    nx, ny, nz = spec.dims
    n_slabs = nz - 1
    if n_slabs < 1 or nx < 2 or ny < 2:
        return
    tets_per_slab = (nx - 1) * (ny - 1) * TETS_PER_CELL
    step = max(1, target_tets // max(tets_per_slab, 1))
    for z0 in range(0, n_slabs, step):
        yield z0, min(z0 + step, n_slabs)
