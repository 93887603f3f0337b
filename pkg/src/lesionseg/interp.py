"""Trilinear / nearest sampling kernels shared by resampling and rotation.

Coordinates are in voxel index units and clamped to the grid, so samples that
fall outside the volume take the edge value. Nearest rounds ties toward the
lower index.
"""
import numpy as np

from . import _accel
from ._accel import njit

TRILINEAR = "trilinear"
NEAREST = "nearest"


# ---------------------------------------------------------------- numba path


@njit
def _axis_setup(c, n):
    if c < 0.0:
        c = 0.0
    elif c > n - 1:
        c = float(n - 1)
    i0 = int(np.floor(c))
    if i0 > n - 1:
        i0 = n - 1
    i1 = i0 + 1 if i0 + 1 < n else n - 1
    return i0, i1, c - i0


@njit
def _nearest_index(c, n):
    i = int(np.ceil(c - 0.5))
    if i < 0:
        return 0
    if i > n - 1:
        return n - 1
    return i


@njit
def _trilinear_at(data, z, y, x):
    nz, ny, nx = data.shape
    z0, z1, fz = _axis_setup(z, nz)
    y0, y1, fy = _axis_setup(y, ny)
    x0, x1, fx = _axis_setup(x, nx)
    c00 = data[z0, y0, x0] * (1.0 - fx) + data[z0, y0, x1] * fx
    c01 = data[z0, y1, x0] * (1.0 - fx) + data[z0, y1, x1] * fx
    c10 = data[z1, y0, x0] * (1.0 - fx) + data[z1, y0, x1] * fx
    c11 = data[z1, y1, x0] * (1.0 - fx) + data[z1, y1, x1] * fx
    c0 = c00 * (1.0 - fy) + c01 * fy
    c1 = c10 * (1.0 - fy) + c11 * fy
    return c0 * (1.0 - fz) + c1 * fz


@njit
def _grid_numba(data, cz, cy, cx, nearest):
    nz, ny, nx = data.shape
    out = np.empty((cz.size, cy.size, cx.size), dtype=np.float64)
    for k in range(cz.size):
        for j in range(cy.size):
            for i in range(cx.size):
                if nearest:
                    out[k, j, i] = data[
                        _nearest_index(cz[k], nz), _nearest_index(cy[j], ny), _nearest_index(cx[i], nx)
                    ]
                else:
                    out[k, j, i] = _trilinear_at(data, cz[k], cy[j], cx[i])
    return out


@njit
def _points_numba(data, coords, nearest):
    nz, ny, nx = data.shape
    n = coords.shape[1]
    out = np.empty(n, dtype=np.float64)
    for p in range(n):
        if nearest:
            out[p] = data[
                _nearest_index(coords[0, p], nz),
                _nearest_index(coords[1, p], ny),
                _nearest_index(coords[2, p], nx),
            ]
        else:
            out[p] = _trilinear_at(data, coords[0, p], coords[1, p], coords[2, p])
    return out


# ---------------------------------------------------------------- numpy path


def _np_axis_setup(c, n):
    c = np.clip(c, 0.0, n - 1)
    i0 = np.minimum(np.floor(c).astype(np.intp), n - 1)
    i1 = np.minimum(i0 + 1, n - 1)
    return i0, i1, c - i0


def _np_nearest(c, n):
    return np.clip(np.ceil(c - 0.5), 0, n - 1).astype(np.intp)


def _grid_numpy(data, cz, cy, cx, nearest):
    if nearest:
        idx = [_np_nearest(c, n) for c, n in zip((cz, cy, cx), data.shape)]
        return data[np.ix_(*idx)].astype(np.float64)
    out = data.astype(np.float64)
    # separable: one linear pass per axis
    for axis, c in enumerate((cz, cy, cx)):
        i0, i1, f = _np_axis_setup(c, out.shape[axis])
        shape = [1, 1, 1]
        shape[axis] = -1
        f = f.reshape(shape)
        out = np.take(out, i0, axis=axis) * (1.0 - f) + np.take(out, i1, axis=axis) * f
    return out


def _points_numpy(data, coords, nearest):
    if nearest:
        idx = [_np_nearest(coords[a], data.shape[a]) for a in range(3)]
        return data[idx[0], idx[1], idx[2]].astype(np.float64)
    (z0, z1, fz), (y0, y1, fy), (x0, x1, fx) = (
        _np_axis_setup(coords[a], data.shape[a]) for a in range(3)
    )
    d = data.astype(np.float64, copy=False)
    c00 = d[z0, y0, x0] * (1.0 - fx) + d[z0, y0, x1] * fx
    c01 = d[z0, y1, x0] * (1.0 - fx) + d[z0, y1, x1] * fx
    c10 = d[z1, y0, x0] * (1.0 - fx) + d[z1, y0, x1] * fx
    c11 = d[z1, y1, x0] * (1.0 - fx) + d[z1, y1, x1] * fx
    c0 = c00 * (1.0 - fy) + c01 * fy
    c1 = c10 * (1.0 - fy) + c11 * fy
    return c0 * (1.0 - fz) + c1 * fz


# ---------------------------------------------------------------- dispatch


def sample_grid(data, cz, cy, cx, mode=TRILINEAR):
    """Sample ``data`` on the tensor grid ``cz x cy x cx`` (float64 result)."""
    data = np.ascontiguousarray(data)
    cz, cy, cx = (np.ascontiguousarray(c, dtype=np.float64) for c in (cz, cy, cx))
    nearest = mode == NEAREST
    if _accel.backend() == "numba":
        return _grid_numba(data, cz, cy, cx, nearest)
    return _grid_numpy(data, cz, cy, cx, nearest)


def sample_points(data, coords, mode=TRILINEAR):
    """Sample ``data`` at scattered points ``coords`` of shape ``(3, N)``."""
    data = np.ascontiguousarray(data)
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    nearest = mode == NEAREST
    if _accel.backend() == "numba":
        return _points_numba(data, coords, nearest)
    return _points_numpy(data, coords, nearest)
