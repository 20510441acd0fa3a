"""Cartesian background mesh and time slabbing.

Cells and vertices are numbered lexicographically with the x index running
fastest. The same background mesh is reused on every time slab.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

MAX_ASPECT = 10.0


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class CartesianMesh:
    origin: np.ndarray
    lengths: np.ndarray
    n_cells: tuple
    h: np.ndarray = field(init=False)

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float).reshape(-1)
        lengths = np.asarray(self.lengths, dtype=float).reshape(-1)
        n_cells = tuple(int(n) for n in self.n_cells)
        if not (len(origin) == len(lengths) == len(n_cells)):
            raise MeshError("origin, lengths and n_cells must have the same dimension")
        if len(n_cells) not in (1, 2, 3):
            raise MeshError(f"unsupported dimension {len(n_cells)}")
        if any(n < 1 for n in n_cells):
            raise MeshError(f"cell counts must be >= 1, got {n_cells}")
        if np.any(~np.isfinite(lengths)) or np.any(lengths <= 0):
            raise MeshError(f"degenerate box with lengths {lengths}")
        h = lengths / np.asarray(n_cells, dtype=float)
        if h.max() / h.min() > MAX_ASPECT:
            raise MeshError(f"cell aspect ratio {h.max() / h.min():.3g} exceeds {MAX_ASPECT}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "n_cells", n_cells)
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return len(self.n_cells)

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.n_cells))

    @property
    def n_vertices(self) -> tuple:
        return tuple(n + 1 for n in self.n_cells)

    @property
    def num_vertices(self) -> int:
        return int(np.prod(self.n_vertices))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def hmax(self) -> float:
        return float(self.h.max())

    def cell_index(self, cell):
        """Multi-index (i, j, ...) of one or many cell ids."""
        cell = np.asarray(cell)
        return np.stack(np.unravel_index(cell, self.n_cells, order="F"), axis=-1)

    def cell_id(self, index):
        index = np.asarray(index)
        return np.ravel_multi_index(tuple(np.moveaxis(index, -1, 0)), self.n_cells, order="F")

    def check_cell(self, cell: int) -> int:
        cell = int(cell)
        if cell < 0 or cell >= self.num_cells:
            raise IndexError(f"cell id {cell} out of range [0, {self.num_cells})")
        return cell

    def cell_origin(self, cells):
        return self.origin + self.cell_index(cells) * self.h

    def cell_center(self, cells):
        return self.cell_origin(cells) + 0.5 * self.h

    def vertex_coordinates(self) -> np.ndarray:
        axes = [self.origin[k] + self.h[k] * np.arange(self.n_vertices[k]) for k in range(self.dim)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel(order="F") for g in grids], axis=-1)

    def cell_vertices(self, cells=None) -> np.ndarray:
        """Vertex ids of each cell, local order lexicographic (x fastest)."""
        if cells is None:
            cells = np.arange(self.num_cells)
        idx = self.cell_index(np.atleast_1d(cells))
        corners = np.array(list(np.ndindex(*(2,) * self.dim)))[:, ::-1]
        vidx = idx[:, None, :] + corners[None, :, :]
        return np.ravel_multi_index(tuple(np.moveaxis(vidx, -1, 0)), self.n_vertices, order="F")

    def to_reference(self, cells, x):
        """Map physical points to the unit reference cell of ``cells``."""
        return (np.asarray(x, dtype=float) - self.cell_origin(cells)) / self.h

    def to_physical(self, cells, xref):
        return self.cell_origin(cells) + np.asarray(xref, dtype=float) * self.h

    def cell_neighbors(self, cell: int) -> list:
        """Face-adjacent neighbours of ``cell`` (no diagonal adjacency)."""
        cell = self.check_cell(cell)
        idx = self.cell_index(cell)
        out = []
        for k in range(self.dim):
            for step in (-1, 1):
                j = idx.copy()
                j[k] += step
                if 0 <= j[k] < self.n_cells[k]:
                    out.append(int(self.cell_id(j)))
        return sorted(out)

    def face_neighbor(self, cell: int, axis: int, side: int) -> Optional[int]:
        idx = self.cell_index(cell)
        idx[axis] += 1 if side else -1
        if 0 <= idx[axis] < self.n_cells[axis]:
            return int(self.cell_id(idx))
        return None

    def locate_point(self, x) -> Optional[int]:
        """Cell whose closed box contains ``x``; ties go to the lower index."""
        x = np.asarray(x, dtype=float).reshape(1, -1)
        if x.shape[1] != self.dim:
            raise ValueError(f"expected a {self.dim}-dimensional point")
        c = int(self.locate_points(x)[0])
        return None if c < 0 else c

    def locate_points(self, x) -> np.ndarray:
        """Vectorised ``locate_point``; -1 marks points outside the box."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        tol = 1e-12 * self.lengths.max()
        rel = x - self.origin
        outside = np.any(rel < -tol, axis=1) | np.any(rel > self.lengths + tol, axis=1)
        # ceil(s) - 1 sends points on a shared face to the lower cell
        s = rel / self.h
        r = np.round(s)
        s = np.where(np.abs(s - r) < 1e-10, r, s)
        idx = np.ceil(s).astype(int) - 1
        idx = np.clip(idx, 0, np.asarray(self.n_cells) - 1)
        out = self.cell_id(idx).astype(int)
        out[outside] = -1
        return out


def build_mesh(bounds: Sequence, n_cells: Sequence) -> CartesianMesh:
    """Build a Cartesian mesh of the box ``bounds = [(lo, hi), ...]``."""
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if len(b) != len(n_cells):
        raise MeshError("bounds and n_cells dimension mismatch")
    if np.any(b[:, 1] <= b[:, 0]):
        raise MeshError(f"degenerate box {b.tolist()}")
    return CartesianMesh(b[:, 0], b[:, 1] - b[:, 0], tuple(n_cells))


def cell_neighbors(mesh: CartesianMesh, cell: int) -> list:
    return mesh.cell_neighbors(cell)


def locate_point(mesh: CartesianMesh, x) -> Optional[int]:
    return mesh.locate_point(x)


@dataclass(frozen=True)
class TimeSlabbing:
    t_points: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_points, dtype=float).reshape(-1)
        if len(t) < 2:
            raise MeshError("need at least one time slab")
        if np.any(np.diff(t) <= 0):
            raise MeshError("time points must be strictly increasing")
        object.__setattr__(self, "t_points", t)

    @classmethod
    def uniform(cls, t_end: float, n_slabs: int, t_start: float = 0.0) -> "TimeSlabbing":
        return cls(np.linspace(t_start, t_end, int(n_slabs) + 1))

    @property
    def n_slabs(self) -> int:
        return len(self.t_points) - 1

    @property
    def taus(self) -> np.ndarray:
        return np.diff(self.t_points)

    @property
    def tau(self) -> float:
        return float(self.taus.max())

    @property
    def t_end(self) -> float:
        return float(self.t_points[-1])

    def slab(self, n: int) -> tuple:
        """Interval (t^{n-1}, t^n) of slab ``n`` (1-based)."""
        if not 1 <= n <= self.n_slabs:
            raise IndexError(f"slab {n} outside 1..{self.n_slabs}")
        return float(self.t_points[n - 1]), float(self.t_points[n])
