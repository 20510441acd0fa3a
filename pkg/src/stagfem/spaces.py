"""Tensor-product space-time Lagrange spaces with aggregation constraints.

Spatial DOFs live on the nodes of the global Q_p grid (p*n+1 nodes per
direction) restricted to active cells. In time every slab carries q+1
Lagrange nodes at the Gauss-Lobatto points, so ``u(t^n)`` is a nodal trace.
Space-time DOF ``(s, k)`` has index ``s*(q+1) + k``.

Constrained spatial DOFs are written as extrapolations of the Lagrange
basis of their aggregate root, ``u_b = sum_a phi_a(x_b) u_a``. The same
constraint acts on every temporal node, so the space-time extension is
``kron(C, I)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .aggregation import AggregateMap
from .geometry import SlabClassification, simplex_of_point
from .mesh import CartesianMesh
from .quadrature import gauss_lobatto_nodes

ZERO_SNAP = 1e-13


# ---------------------------------------------------------------------------
# Lagrange bases
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _lagrange_coeffs(nodes: tuple, deriv: int) -> np.ndarray:
    """Monomial coefficients (deg+1, nbasis) of the derivative of each basis."""
    x = np.asarray(nodes)
    V = np.vander(x, len(x), increasing=True)
    C = np.linalg.inv(V)
    for _ in range(deriv):
        C = np.polynomial.polynomial.polyder(C, axis=0) if len(C) > 1 else np.zeros((1, C.shape[1]))
    return C


def lagrange_basis(nodes, x, deriv: int = 0) -> np.ndarray:
    """Values (len(x), len(nodes)) of the Lagrange basis (or a derivative)."""
    C = _lagrange_coeffs(tuple(float(v) for v in nodes), int(deriv))
    x = np.asarray(x, dtype=float).reshape(-1)
    V = np.vander(x, len(C), increasing=True)
    return V @ C


def equispaced_nodes(p: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, p + 1)


def lagrange_1d(p: int, x, deriv: int = 0) -> np.ndarray:
    return lagrange_basis(equispaced_nodes(p), x, deriv)


def tensor_basis(p: int, xref, alpha=None, h=None, snap: bool = False) -> np.ndarray:
    """Q_p basis (or its partial derivative ``alpha``) at reference points.

    Local node index runs x fastest. With ``h`` given the derivative is
    scaled to physical coordinates.
    """
    xref = np.atleast_2d(np.asarray(xref, dtype=float))
    n, d = xref.shape
    alpha = (0,) * d if alpha is None else tuple(alpha)
    out = np.ones((n, 1))
    for k in range(d):
        L = lagrange_1d(p, xref[:, k], alpha[k])
        if snap:
            L = np.where(np.abs(L) < ZERO_SNAP, 0.0, L)
        if h is not None and alpha[k]:
            L = L / h[k] ** alpha[k]
        out = (L[:, :, None] * out[:, None, :]).reshape(n, -1)
    return out


def tensor_gradient(p: int, xref, h) -> np.ndarray:
    """Physical gradients (n, nloc, d)."""
    d = np.atleast_2d(xref).shape[1]
    return np.stack([tensor_basis(p, xref, tuple(int(i == k) for i in range(d)), h)
                     for k in range(d)], axis=-1)


def tensor_hessian(p: int, xref, h) -> np.ndarray:
    """Physical second derivatives (n, nloc, d, d)."""
    d = np.atleast_2d(xref).shape[1]
    rows = []
    for i in range(d):
        cols = []
        for j in range(d):
            a = [0] * d
            a[i] += 1
            a[j] += 1
            cols.append(tensor_basis(p, xref, a, h))
        rows.append(np.stack(cols, axis=-1))
    return np.stack(rows, axis=-2)


def local_node_offsets(p: int, dim: int) -> np.ndarray:
    """Integer offsets (nloc, dim) of the local nodes inside a cell."""
    return np.array(list(np.ndindex(*(p + 1,) * dim)))[:, ::-1]


# ---------------------------------------------------------------------------
# spaces
# ---------------------------------------------------------------------------

class SpaceError(RuntimeError):
    pass


@dataclass
class AgFESpace:
    mesh: CartesianMesh
    cls: SlabClassification
    agg: Optional[AggregateMap]
    p: int
    q: int
    node_grid: np.ndarray         # (n_dofs, d) integer grid multi-index
    elem_cell: np.ndarray         # (ne,)
    elem_simplex: np.ndarray      # (ne,) -1 unless the cell is duplicated
    elem_dofs: np.ndarray         # (ne, nloc)
    elem_root: np.ndarray
    elem_generation: np.ndarray
    elem_well: np.ndarray
    cell_elem: np.ndarray         # (num_cells,) -1 exterior, -2 duplicated
    split_elem: np.ndarray        # (num_cells, 2) elements of duplicated cells
    free: np.ndarray              # (n_dofs,) bool
    free_index: np.ndarray        # (n_dofs,) position among free DOFs or -1
    C: sp.csr_matrix              # (n_dofs, n_free)
    constraint_owner: np.ndarray  # (n_dofs,) element that defines the constraint, -1 if free
    aggregated: bool = True

    @property
    def slab(self) -> Tuple[float, float]:
        return self.cls.slab

    @property
    def tau(self) -> float:
        return self.slab[1] - self.slab[0]

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def n_dofs(self) -> int:
        return len(self.node_grid)

    @property
    def n_free(self) -> int:
        return int(self.free.sum())

    @property
    def nt(self) -> int:
        return self.q + 1

    @property
    def n_free_st(self) -> int:
        return self.n_free * self.nt

    @property
    def n_dofs_st(self) -> int:
        return self.n_dofs * self.nt

    @property
    def free_dofs(self) -> np.ndarray:
        return np.nonzero(self.free)[0]

    @property
    def constrained_dofs(self) -> np.ndarray:
        return np.nonzero(~self.free)[0]

    @property
    def node_coordinates(self) -> np.ndarray:
        return self.mesh.origin + self.node_grid * (self.mesh.h / self.p)

    @property
    def temporal_nodes(self) -> np.ndarray:
        return gauss_lobatto_nodes(self.q)

    @property
    def temporal_times(self) -> np.ndarray:
        t0, t1 = self.slab
        return t0 + (t1 - t0) * self.temporal_nodes

    @property
    def C_st(self) -> sp.csr_matrix:
        return sp.kron(self.C, sp.identity(self.nt), format="csr")

    def constraints(self) -> Dict[int, List[Tuple[int, float]]]:
        """Constrained DOF -> [(free DOF, coefficient), ...]."""
        Ccoo = self.C.tocsr()
        free_ids = self.free_dofs
        out = {}
        for b in self.constrained_dofs:
            row = Ccoo.getrow(b)
            out[int(b)] = [(int(free_ids[j]), float(v)) for j, v in zip(row.indices, row.data)]
        return out

    def temporal_basis(self, t, deriv: int = 0) -> np.ndarray:
        """Temporal Lagrange basis at physical times, (len(t), q+1)."""
        s = (np.asarray(t, dtype=float).reshape(-1) - self.slab[0]) / self.tau
        return lagrange_basis(self.temporal_nodes, s, deriv) / self.tau ** deriv

    def point_elements(self, cell, simplex=None, xref=None) -> np.ndarray:
        """Element carrying each point given its cell (and Kuhn simplex)."""
        cell = np.asarray(cell, dtype=int)
        e = self.cell_elem[cell]
        dup = e == -2
        if dup.any():
            s = None if simplex is None else np.asarray(simplex)[dup]
            if s is None or np.any(s < 0):
                s2 = simplex_of_point(self.dim, np.asarray(xref)[dup])
                s = s2 if s is None else np.where(s < 0, s2, s)
            e = e.copy()
            e[dup] = self.split_elem[cell[dup], s]
        if np.any(e < 0):
            bad = cell[e < 0][0]
            raise SpaceError(f"cell {bad} is not active in slab {self.slab}")
        return e

    def locate(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """Active cell and reference coordinates of physical points.

        Points on faces shared with inactive cells are attributed to an
        active neighbour. Raises if a point lies outside the active region.
        """
        mesh = self.mesh
        x = np.atleast_2d(np.asarray(x, dtype=float))
        s = (x - mesh.origin) / mesh.h
        r = np.round(s)
        on = np.abs(s - r) < 1e-10
        s = np.where(on, r, s)
        lo = np.clip(np.ceil(s).astype(int) - 1, 0, np.asarray(mesh.n_cells) - 1)
        tol = 1e-10
        outside = np.any(s < -tol, axis=1) | np.any(s > np.asarray(mesh.n_cells) + tol, axis=1)
        cell = np.full(len(x), -1)
        for shift in np.ndindex(*(2,) * self.dim):
            cand = lo + np.asarray(shift)
            ok = np.all((np.asarray(shift) == 0) | on, axis=1)
            ok &= np.all((cand >= 0) & (cand < np.asarray(mesh.n_cells)), axis=1)
            ok &= cell < 0
            if not ok.any():
                continue
            c = mesh.cell_id(np.clip(cand, 0, np.asarray(mesh.n_cells) - 1))
            ok &= self.cell_elem[c] != -1
            cell[ok] = c[ok]
        bad = outside | (cell < 0)
        if bad.any():
            raise SpaceError(f"point {x[bad][0].tolist()} lies outside the active region")
        xref = (x - mesh.cell_origin(cell)) / mesh.h
        return cell, xref

    def unconstrained(self) -> "AgFESpace":
        return build_space(self.mesh, self.cls, self.agg, self.p, self.q, aggregate=False)


def _cell_local_grid(mesh: CartesianMesh, p: int, cells: np.ndarray) -> np.ndarray:
    idx = mesh.cell_index(cells).reshape(len(cells), -1)
    return p * idx[:, None, :] + local_node_offsets(p, mesh.dim)[None]


def build_space(mesh: CartesianMesh, cls: SlabClassification, agg: Optional[AggregateMap],
                p: int, q: int, aggregate: bool = True) -> AgFESpace:
    """AgFE space of the slab; ``aggregate=False`` gives the plain active space."""
    if p not in (1, 2, 3) or q not in (1, 2, 3):
        raise ValueError(f"unsupported orders p={p}, q={q}")
    d = mesh.dim
    active = cls.active_cells
    ngrid = np.asarray(mesh.n_cells) * p + 1
    offs = local_node_offsets(p, d)
    nloc = len(offs)

    def grid_id(g):
        return np.ravel_multi_index(tuple(np.moveaxis(g, -1, 0)), tuple(ngrid), order="F")

    copies = agg.copies if (agg is not None and aggregate) else {}
    plain = np.array([c for c in active if int(c) not in copies], dtype=int)
    lg = _cell_local_grid(mesh, p, plain)
    gids = grid_id(lg)
    shared, inv = np.unique(gids, return_inverse=True)
    node_grid = [np.stack(np.unravel_index(shared, tuple(ngrid), order="F"), axis=-1)]
    elem_dofs = [inv.reshape(len(plain), nloc)]
    elem_cell = [plain]
    elem_simplex = [np.full(len(plain), -1)]
    if agg is not None and aggregate:
        elem_root = [agg.root_of[plain]]
        elem_gen = [agg.generation[plain]]
    else:
        elem_root = [plain.copy()]
        elem_gen = [np.zeros(len(plain), dtype=int)]
    n_dofs = len(shared)
    gid_to_dof = dict(zip(shared.tolist(), range(len(shared))))

    # duplicated cells: nodes strictly inside the own triangle stay shared
    ref = offs / p
    for c in sorted(copies):
        cg = _cell_local_grid(mesh, p, np.array([c]))[0]
        for cp in copies[c]:
            own = ref[:, 1] < ref[:, 0] if cp.simplex == 0 else ref[:, 1] > ref[:, 0]
            dofs = np.empty(nloc, dtype=int)
            extra = []
            for a in range(nloc):
                gid = int(grid_id(cg[a]))
                if own[a] and gid in gid_to_dof:
                    dofs[a] = gid_to_dof[gid]
                elif own[a]:
                    gid_to_dof[gid] = n_dofs
                    dofs[a] = n_dofs
                    extra.append(cg[a])
                    n_dofs += 1
                else:
                    dofs[a] = n_dofs
                    extra.append(cg[a])
                    n_dofs += 1
            if extra:
                node_grid.append(np.array(extra))
            elem_dofs.append(dofs[None])
            elem_cell.append(np.array([c]))
            elem_simplex.append(np.array([cp.simplex]))
            elem_root.append(np.array([cp.root]))
            elem_gen.append(np.array([cp.generation]))

    node_grid = np.concatenate(node_grid).astype(int)
    elem_dofs = np.concatenate(elem_dofs)
    elem_cell = np.concatenate(elem_cell)
    elem_simplex = np.concatenate(elem_simplex)
    elem_root = np.concatenate(elem_root)
    elem_gen = np.concatenate(elem_gen)
    ne = len(elem_cell)

    cell_elem = np.full(mesh.num_cells, -1)
    split_elem = np.full((mesh.num_cells, 2), -1)
    plain_mask = elem_simplex < 0
    cell_elem[elem_cell[plain_mask]] = np.nonzero(plain_mask)[0]
    for e in np.nonzero(~plain_mask)[0]:
        cell_elem[elem_cell[e]] = -2
        split_elem[elem_cell[e], elem_simplex[e]] = e

    if aggregate:
        elem_well = cls.well_posed[elem_cell] & plain_mask
    else:
        elem_well = np.ones(ne, dtype=bool)
    free = np.zeros(n_dofs, dtype=bool)
    free[elem_dofs[elem_well].ravel()] = True
    free_index = np.full(n_dofs, -1)
    free_index[free] = np.arange(free.sum())

    # constraint owner: element with minimal (generation, root, cell)
    owner = np.full(n_dofs, -1)
    rows, cols, vals = [np.nonzero(free)[0]], [free_index[free]], [np.ones(free.sum())]
    if not free.all():
        pe = np.repeat(np.arange(ne), nloc)
        pd = elem_dofs.ravel()
        m = ~free[pd]
        pe, pd = pe[m], pd[m]
        order = np.lexsort((elem_cell[pe], elem_root[pe], elem_gen[pe], pd))
        pe, pd = pe[order], pd[order]
        first = np.ones(len(pd), dtype=bool)
        first[1:] = pd[1:] != pd[:-1]
        owner[pd[first]] = pe[first]
        cdofs = np.nonzero(~free)[0]
        if np.any(owner[cdofs] < 0):
            raise SpaceError("constrained DOF without owning element")
        roots = elem_root[owner[cdofs]]
        root_elem = cell_elem[roots]
        if np.any(root_elem < 0) or not np.all(elem_well[root_elem]):
            raise SpaceError("aggregate root is not a well-posed element")
        ridx = mesh.cell_index(roots).reshape(len(roots), -1)
        xref = (node_grid[cdofs] - p * ridx) / p
        phi = tensor_basis(p, xref, snap=True)
        rdofs = elem_dofs[root_elem]
        nz = phi != 0.0
        rows.append(np.repeat(cdofs, nloc)[nz.ravel()])
        cols.append(free_index[rdofs][nz])
        vals.append(phi[nz])
    C = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_dofs, int(free.sum())))
    return AgFESpace(mesh, cls, agg, p, q, node_grid, elem_cell, elem_simplex, elem_dofs,
                     elem_root, elem_gen, elem_well, cell_elem, split_elem, free, free_index,
                     C, owner, aggregated=aggregate)


# ---------------------------------------------------------------------------
# functions
# ---------------------------------------------------------------------------

@dataclass
class SlabFunction:
    """Coefficients on the free space-time DOFs of a space."""
    space: AgFESpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if len(self.coeffs) != self.space.n_free_st:
            raise ValueError(f"expected {self.space.n_free_st} coefficients, got {len(self.coeffs)}")

    def nodal_values(self) -> np.ndarray:
        """Expanded values (n_dofs, q+1) on all active DOFs."""
        return self.space.C @ self.coeffs.reshape(self.space.n_free, self.space.nt)

    def __call__(self, x, t):
        return eval_function(self.space, self, x, t)


@dataclass
class SpaceFunction:
    """A spatial field on the active DOFs of a slab space (e.g. a time trace)."""
    space: AgFESpace
    values: np.ndarray

    def at(self, cell, xref, simplex=None, deriv: int = 0) -> np.ndarray:
        """Value (deriv 0) or physical gradient (deriv 1) at reference points."""
        sp_ = self.space
        e = sp_.point_elements(cell, simplex, xref)
        u = self.values[sp_.elem_dofs[e]]
        if deriv == 0:
            return np.einsum("na,na->n", tensor_basis(sp_.p, xref), u)
        return np.einsum("nad,na->nd", tensor_gradient(sp_.p, xref, sp_.mesh.h), u)

    def __call__(self, x, t=None) -> np.ndarray:
        cell, xref = self.space.locate(x)
        return self.at(cell, xref)

    def gradient(self, x) -> np.ndarray:
        cell, xref = self.space.locate(x)
        return self.at(cell, xref, deriv=1)


def eval_function(space: AgFESpace, f: SlabFunction, x, t: float) -> np.ndarray:
    return restrict_at_time(space, f, t)(x)


def restrict_at_time(space: AgFESpace, f: SlabFunction, t: float) -> SpaceFunction:
    t0, t1 = space.slab
    tol = 1e-12 * max(1.0, abs(t1))
    if not t0 - tol <= t <= t1 + tol:
        raise ValueError(f"time {t} outside slab [{t0}, {t1}]")
    psi = space.temporal_basis(t)[0]
    return SpaceFunction(space, f.nodal_values() @ psi)


def interpolate(space: AgFESpace, g: Callable) -> SlabFunction:
    """Nodal interpolation of ``g(x, t)`` on the free space-time DOFs."""
    x = space.node_coordinates[space.free]
    cols = [np.asarray(g(x, t), dtype=float).reshape(-1) * np.ones(len(x))
            for t in space.temporal_times]
    return SlabFunction(space, np.stack(cols, axis=1).ravel())


def interpolate_space(space: AgFESpace, g: Callable, t: float) -> SpaceFunction:
    """Free nodal values of ``g(., t)`` extended through the constraints."""
    x = space.node_coordinates[space.free]
    vals = np.asarray(g(x, t), dtype=float).reshape(-1) * np.ones(len(x))
    return SpaceFunction(space, space.C @ vals)
