"""Cell-centred finite-volume grids and operators.

Two geometries are supported: an interval ``[0, L]`` whose surface is the
pair of end points, and a strip ``[0, lx) x [0, ly]`` periodic in ``x`` whose
surface is the two lines ``y = 0`` and ``y = ly``.

Bulk fields are arrays of shape ``(n_cells, N)`` (or ``(n_cells,)``), surface
fields have shape ``(n_nodes, ...)``. Every boundary node owns one ghost value
per species, located at the mirror image of the adjacent cell centre.
"""
from __future__ import annotations

from typing import Callable, Union

import numpy as np
import scipy.sparse as sp


class _GridBase:
    """Geometry tables shared by both grids.

    ``faces`` lists interior cell pairs, ``bnd_cells`` the three cells nearest
    each boundary node (adjacent cell first), ``edges`` the surface node pairs.
    """

    def _freeze(self, **arrays):
        for k, v in arrays.items():
            v = np.asarray(v)
            v.setflags(write=False)
            setattr(self, k, v)

    @property
    def n_cells(self) -> int:
        return self.cell_volume.size

    @property
    def n_nodes(self) -> int:
        return self.node_weight.size

    @property
    def adjacent(self) -> np.ndarray:
        """Index of the cell adjacent to each boundary node."""
        return self.bnd_cells[:, 0]

    @property
    def volume(self) -> float:
        return float(self.cell_volume.sum())

    @property
    def surface_measure(self) -> float:
        return float(self.node_weight.sum())

    @property
    def surface_dimension(self) -> int:
        return 0 if self.edges.size == 0 else 1

    def __eq__(self, other):
        return type(self) is type(other) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())


class Interval1DGrid(_GridBase):
    def __init__(self, n_cells: int, length: float = 1.0):
        n, L = int(n_cells), float(length)
        if n < 3:
            raise ValueError("interval grid needs at least 3 cells")
        if not L > 0:
            raise ValueError("length must be positive")
        self.length = L
        self.h = L / n
        h = self.h
        idx = np.arange(n)
        self._freeze(
            cell_volume=np.full(n, h),
            centers=((idx + 0.5) * h)[:, None],
            faces=np.column_stack([idx[:-1], idx[1:]]),
            face_area=np.ones(n - 1),
            face_dist=np.full(n - 1, h),
            bnd_cells=np.array([[0, 1, 2], [n - 1, n - 2, n - 3]]),
            bnd_dist=np.full(2, h),
            bnd_area=np.ones(2),
            node_weight=np.ones(2),
            node_positions=np.array([[0.0], [L]]),
            edges=np.zeros((0, 2), dtype=int),
            edge_length=np.zeros(0),
        )

    def _key(self):
        return (self.n_cells, self.length)

    def __repr__(self):
        return f"Interval1DGrid(n_cells={self.n_cells}, length={self.length})"


class PeriodicStripGrid(_GridBase):
    def __init__(self, nx: int, ny: int, lx: float = 1.0, ly: float = 1.0):
        nx, ny, lx, ly = int(nx), int(ny), float(lx), float(ly)
        if nx < 3 or ny < 3:
            raise ValueError("strip grid needs nx, ny >= 3")
        if not (lx > 0 and ly > 0):
            raise ValueError("strip extents must be positive")
        self.nx, self.ny, self.lx, self.ly = nx, ny, lx, ly
        self.hx, self.hy = lx / nx, ly / ny
        hx, hy = self.hx, self.hy
        i, j = np.meshgrid(np.arange(nx), np.arange(ny))
        i, j = i.ravel(), j.ravel()  # cell k = j * nx + i

        def cell(ii, jj):
            return jj * nx + ii

        xf = np.column_stack([cell(i, j), cell((i + 1) % nx, j)])
        inner = j < ny - 1
        yf = np.column_stack([cell(i[inner], j[inner]), cell(i[inner], j[inner] + 1)])
        col = np.arange(nx)
        bottom = np.column_stack([cell(col, 0), cell(col, 1), cell(col, 2)])
        top = np.column_stack([cell(col, ny - 1), cell(col, ny - 2), cell(col, ny - 3)])
        xs = (col + 0.5) * hx
        ring = np.column_stack([col, (col + 1) % nx])
        self._freeze(
            cell_volume=np.full(nx * ny, hx * hy),
            centers=np.column_stack([(i + 0.5) * hx, (j + 0.5) * hy]),
            faces=np.concatenate([xf, yf]),
            face_area=np.concatenate([np.full(len(xf), hy), np.full(len(yf), hx)]),
            face_dist=np.concatenate([np.full(len(xf), hx), np.full(len(yf), hy)]),
            bnd_cells=np.concatenate([bottom, top]),
            bnd_dist=np.full(2 * nx, hy),
            bnd_area=np.full(2 * nx, hx),
            node_weight=np.full(2 * nx, hx),
            node_positions=np.concatenate(
                [np.column_stack([xs, np.zeros(nx)]), np.column_stack([xs, np.full(nx, ly)])]
            ),
            edges=np.concatenate([ring, nx + ring]),
            edge_length=np.full(2 * nx, hx),
        )

    def _key(self):
        return (self.nx, self.ny, self.lx, self.ly)

    def __repr__(self):
        return f"PeriodicStripGrid(nx={self.nx}, ny={self.ny}, lx={self.lx}, ly={self.ly})"


Grid = Union[Interval1DGrid, PeriodicStripGrid]
Closure = Union[np.ndarray, Callable[[Grid, np.ndarray], np.ndarray]]


def laplacian_matrices(grid: Grid):
    """Unit-diffusivity operators ``(A, B)`` with ``lap f = A f + B g``.

    ``g`` holds one ghost value per boundary node. The stencil is the
    two-point flux over every face divided by the cell volume.
    """
    nc, nn = grid.n_cells, grid.n_nodes
    left, right = grid.faces[:, 0], grid.faces[:, 1]
    w = grid.face_area / grid.face_dist
    rows = np.concatenate([left, right, left, right])
    cols = np.concatenate([right, left, left, right])
    vals = np.concatenate([w, w, -w, -w])
    wb = grid.bnd_area / grid.bnd_dist
    adj = grid.adjacent
    rows = np.concatenate([rows, adj])
    cols = np.concatenate([cols, adj])
    vals = np.concatenate([vals, -wb])
    inv_vol = 1.0 / grid.cell_volume
    a = sp.csr_matrix((vals * inv_vol[rows], (rows, cols)), shape=(nc, nc))
    b = sp.csr_matrix((wb * inv_vol[adj], (adj, np.arange(nn))), shape=(nc, nn))
    return a, b


def surface_laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    nn = grid.n_nodes
    if grid.surface_dimension == 0:
        return sp.csr_matrix((nn, nn))
    i, j = grid.edges[:, 0], grid.edges[:, 1]
    w = 1.0 / grid.edge_length
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([j, i, i, j])
    vals = np.concatenate([w, w, -w, -w])
    inv = 1.0 / grid.node_weight
    return sp.csr_matrix((vals * inv[rows], (rows, cols)), shape=(nn, nn))


def _as_2d(f):
    f = np.asarray(f, dtype=float)
    return (f[:, None], True) if f.ndim == 1 else (f, False)


def laplacian_apply(f, grid: Grid, d, bc_closure: Closure) -> np.ndarray:
    """``d * lap f`` with ghost values from ``bc_closure``.

    ``bc_closure`` is either an array of ghost values ``(n_nodes, N)`` or a
    callable ``closure(grid, f) -> ghosts``. The cell-volume weighted sum of
    the result equals the net boundary flux into the domain.
    """
    if bc_closure is None:
        raise ValueError("a boundary closure is required")
    f2, flat = _as_2d(f)
    ghosts = bc_closure(grid, f2) if callable(bc_closure) else np.asarray(bc_closure, dtype=float)
    ghosts = ghosts.reshape(grid.n_nodes, -1)
    a, b = laplacian_matrices(grid)
    out = (a @ f2 + b @ ghosts) * np.asarray(d, dtype=float)
    return out[:, 0] if flat else out


def zero_flux_closure(grid: Grid, f) -> np.ndarray:
    return np.asarray(f)[grid.adjacent]


def dirichlet_closure(values) -> Callable:
    """Ghosts placing ``values`` on the boundary faces."""

    def closure(grid, f):
        adj = np.asarray(f, dtype=float)[grid.adjacent]
        return 2.0 * np.asarray(values, dtype=float).reshape(adj.shape[0], -1).reshape(adj.shape) - adj

    return closure


def neumann_closure(flux, d) -> Callable:
    """Ghosts realising the outward flux ``-d dn f = flux`` on every face."""

    def closure(grid, f):
        adj = np.asarray(f, dtype=float)[grid.adjacent]
        flux_ = np.asarray(flux, dtype=float).reshape(adj.shape)
        h = grid.bnd_dist.reshape(-1, *([1] * (adj.ndim - 1)))
        return adj - flux_ * h / np.asarray(d, dtype=float)

    return closure


def ghost_trace(f, ghosts, grid: Grid) -> np.ndarray:
    """Face values implied by ghost values: mean of cell and ghost."""
    return 0.5 * (np.asarray(f)[grid.adjacent] + ghosts)


def ghost_flux(f, ghosts, grid: Grid, d) -> np.ndarray:
    """Outward flux ``-d dn f`` implied by ghost values."""
    return np.asarray(d) * (np.asarray(f)[grid.adjacent] - ghosts) / grid.bnd_dist.reshape(-1, *([1] * (np.ndim(ghosts) - 1)))


def surface_laplacian_apply(g, grid: Grid) -> np.ndarray:
    """Periodic second-order Laplacian along the surface (zero on intervals)."""
    return surface_laplacian_matrix(grid) @ np.asarray(g, dtype=float)


def boundary_trace(f, grid: Grid) -> np.ndarray:
    """Face values by linear extrapolation from the two nearest cells."""
    f = np.asarray(f, dtype=float)
    c = grid.bnd_cells
    return 1.5 * f[c[:, 0]] - 0.5 * f[c[:, 1]]


def normal_flux(f, grid: Grid, d) -> np.ndarray:
    """Outward flux ``-d dn f`` from a three-cell one-sided difference.

    Positive values mean material leaves the bulk. For ``f = y`` on ``[0, 1]``
    this gives ``+d`` at ``y = 0`` and ``-d`` at ``y = 1``.
    """
    f = np.asarray(f, dtype=float)
    c = grid.bnd_cells
    h = grid.bnd_dist.reshape(-1, *([1] * (f.ndim - 1)))
    inward_derivative = (-2.0 * f[c[:, 0]] + 3.0 * f[c[:, 1]] - f[c[:, 2]]) / h
    return np.asarray(d) * inward_derivative


def integrate(values, grid: Grid, where: str = "bulk") -> np.ndarray:
    """Midpoint quadrature over the bulk or the surface; sums over axis 0."""
    values = np.asarray(values, dtype=float)
    if where == "bulk":
        w = grid.cell_volume
    elif where == "surface":
        w = grid.node_weight
    else:
        raise ValueError("where must be 'bulk' or 'surface'")
    return np.tensordot(w, values, axes=(0, 0))
