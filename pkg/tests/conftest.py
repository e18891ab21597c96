import numpy as np
import pytest

from bimoment.grids import BivariateField, GridSpec, ScalarGrid


def xy_field(n: int, fx, fy) -> BivariateField:
    """Field (fx(x,y,z), fy(x,y,z)) on the unit-cube grid with n^3 vertices."""
    h = 1.0 / (n - 1)
    spec = GridSpec((n, n, n), (0.0, 0.0, 0.0), (h, h, h))
    ax = spec.axis_coords(0)
    X = np.broadcast_to(ax[:, None, None], spec.dims)
    Y = np.broadcast_to(ax[None, :, None], spec.dims)
    Z = np.broadcast_to(ax[None, None, :], spec.dims)
    f1 = np.asarray(fx(X, Y, Z), dtype=np.float64)
    f2 = np.asarray(fy(X, Y, Z), dtype=np.float64)
    f1 = np.broadcast_to(f1, spec.dims).reshape(-1, order="F")
    f2 = np.broadcast_to(f2, spec.dims).reshape(-1, order="F")
    return BivariateField(ScalarGrid(spec, f1.copy()), ScalarGrid(spec, f2.copy()))


@pytest.fixture(scope="session")
def identity_field_64():
    """(x, y) on a 64^3 unit-cube grid; its exact scatterplot is uniform."""
    return xy_field(64, lambda x, y, z: x, lambda x, y, z: y)
