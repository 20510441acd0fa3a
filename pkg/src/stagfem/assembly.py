"""Slab-wise assembly of the space-time DG(q)/CG(p) forms.

Spatial element matrices are accumulated at every temporal quadrature point
and combined with temporal basis products into space-time element matrices
``E[e, a, i, b, j]`` (a, b spatial local nodes; i, j temporal nodes; rows are
test functions). The global matrix lives on all active space-time DOFs and is
reduced to the free DOFs by the congruence ``C_st^T A C_st``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
import scipy.sparse as sp

from .geometry import CellStatus, CutQuadrature, SlabGeometry
from .quadrature import gauss_1d, tensor_rule
from .spaces import AgFESpace, SpaceFunction, tensor_basis, tensor_gradient

CHUNK = 40000


class AssemblyError(RuntimeError):
    pass


@dataclass
class ProblemData:
    """Coefficients and data of ``u_t + w.grad u - mu lap u = f``.

    Callables take ``(x (n, d), t)``; ``g_N`` also receives the outward
    normals. ``None`` means zero. ``interface_bc`` and ``box_bc`` tag the
    moving boundary and the outer box as ``'dirichlet'`` or ``'neumann'``.
    """
    mu: float = 1.0
    f: Optional[Callable] = None
    w: Optional[Callable] = None
    g_D: Optional[Callable] = None
    g_N: Optional[Callable] = None
    interface_bc: str = "dirichlet"
    box_bc: str = "dirichlet"
    gamma: Optional[float] = None

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        for tag in (self.interface_bc, self.box_bc):
            if tag not in ("dirichlet", "neumann"):
                raise ValueError(f"unknown boundary tag {tag!r}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")

    def nitsche_gamma(self, p: int) -> float:
        return float(self.gamma) if self.gamma is not None else 10.0 * p * (p + 1)

    def beta(self, p: int, h: float) -> float:
        return self.mu * self.nitsche_gamma(p) / h


@dataclass
class Orders:
    spatial: int
    temporal: int
    surface: int
    split_at_crossings: bool = False

    @classmethod
    def default(cls, p: int, q: int, extra: int = 0, split_at_crossings: bool = False) -> "Orders":
        return cls(2 * p + extra, 2 * q + 1 + extra, 2 * p + extra, split_at_crossings)


@dataclass
class SlabSystem:
    space: AgFESpace
    matrix: sp.csr_matrix
    rhs: np.ndarray
    full_matrix: Optional[sp.csr_matrix] = None
    full_rhs: Optional[np.ndarray] = None
    info: Dict = field(default_factory=dict)

    @property
    def free_dofs(self) -> np.ndarray:
        return self.space.free_dofs


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _zero(x, t):
    return np.zeros(len(x))


def _reduce(e: np.ndarray, arr: np.ndarray, ne: int) -> np.ndarray:
    """Sum rows of ``arr`` per element id ``e``."""
    out = np.zeros((ne,) + arr.shape[1:])
    if not len(e):
        return out
    o = np.argsort(e, kind="stable")
    es = e[o]
    starts = np.r_[0, np.nonzero(np.diff(es))[0] + 1]
    out[es[starts]] = np.add.reduceat(arr[o], starts, axis=0)
    return out


def _pair_reduce(e, wa, b, ne):
    """Per-element ``sum_pts wa[:, a] * b[:, c]`` in chunks of points."""
    out = np.zeros((ne, wa.shape[1], b.shape[1]))
    if not len(e):
        return out
    o = np.argsort(e, kind="stable")
    e, wa, b = e[o], wa[o], b[o]
    for s in range(0, len(e), CHUNK):
        sl = slice(s, s + CHUNK)
        es = e[sl]
        starts = np.r_[0, np.nonzero(np.diff(es))[0] + 1]
        prod = wa[sl][:, :, None] * b[sl][:, None, :]
        out[es[starts]] += np.add.reduceat(prod, starts, axis=0)
    return out


@dataclass
class _Points:
    elem: np.ndarray
    x: np.ndarray
    w: np.ndarray
    phi: np.ndarray
    grad: np.ndarray
    normals: Optional[np.ndarray] = None
    vn: Optional[np.ndarray] = None


def _points(space: AgFESpace, qd: CutQuadrature, grads: bool = True) -> _Points:
    e = space.point_elements(qd.cell, qd.simplex, qd.xref) if len(qd) else np.zeros(0, int)
    phi = tensor_basis(space.p, qd.xref) if len(qd) else np.zeros((0, (space.p + 1) ** space.dim))
    g = None
    if grads:
        g = (tensor_gradient(space.p, qd.xref, space.mesh.h) if len(qd)
             else np.zeros((0, phi.shape[1], space.dim)))
    return _Points(e, qd.x, qd.weights, phi, g, qd.normals, qd.normal_velocity)


def _st_matrix(space: AgFESpace, T: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Space-time element matrices from temporal (k, i, j) and spatial (k, e, a, b)."""
    E = np.einsum("kij,keab->eaibj", T, S)
    ne, nl, nt = E.shape[0], E.shape[1], E.shape[2]
    return E.reshape(ne, nl * nt, nl * nt)


def _st_vector(space: AgFESpace, T: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Space-time element vectors from temporal (k, i) and spatial (k, e, a)."""
    E = np.einsum("ki,kea->eai", T, F)
    return E.reshape(E.shape[0], -1)


def _st_dofs(space: AgFESpace) -> np.ndarray:
    nt = space.nt
    return (space.elem_dofs[:, :, None] * nt + np.arange(nt)[None, None, :]).reshape(len(space.elem_dofs), -1)


def scatter_matrix(space: AgFESpace, E: np.ndarray) -> sp.csr_matrix:
    dofs = _st_dofs(space)
    n = dofs.shape[1]
    rows = np.repeat(dofs, n, axis=1).ravel()
    cols = np.tile(dofs, (1, n)).ravel()
    N = space.n_dofs_st
    return sp.csr_matrix((E.ravel(), (rows, cols)), shape=(N, N))


def scatter_vector(space: AgFESpace, E: np.ndarray) -> np.ndarray:
    return np.bincount(_st_dofs(space).ravel(), weights=E.ravel(), minlength=space.n_dofs_st)


def reduce_matrix(space: AgFESpace, A: sp.spmatrix) -> sp.csr_matrix:
    C = space.C_st
    return (C.T @ A @ C).tocsr()


def reduce_vector(space: AgFESpace, b: np.ndarray) -> np.ndarray:
    return space.C_st.T @ b


# ---------------------------------------------------------------------------
# spatial terms at one time
# ---------------------------------------------------------------------------

def _boundary_rules(space, geom, t, orders, data):
    """Surface rules split into Dirichlet and Neumann parts."""
    cells = space.cls.active_cells
    gam = geom.interface(t, orders.surface, cells)
    box = geom.boundary(t, orders.surface, cells)
    dir_rules, neu_rules = [], []
    (dir_rules if data.interface_bc == "dirichlet" else neu_rules).append(gam)
    (dir_rules if data.box_bc == "dirichlet" else neu_rules).append(box)
    return dir_rules, neu_rules


def spatial_terms(space: AgFESpace, geom: SlabGeometry, t: float, data: ProblemData,
                  orders: Orders, want=("mass", "stiff", "conv", "nitsche", "rhs")) -> Dict[str, np.ndarray]:
    """Element matrices (ne, nloc, nloc) / vectors (ne, nloc) at time ``t``."""
    ne = len(space.elem_cell)
    out = {}
    need_vol = {"mass", "stiff", "conv", "rhs"} & set(want)
    if need_vol:
        P = _points(space, geom.volume(t, orders.spatial, space.cls.active_cells))
        wphi = P.w[:, None] * P.phi
        if "mass" in want:
            out["mass"] = _pair_reduce(P.elem, wphi, P.phi, ne)
        if "stiff" in want:
            mw = (data.mu * P.w)[:, None]
            out["stiff"] = sum(_pair_reduce(P.elem, mw * P.grad[:, :, k], P.grad[:, :, k], ne)
                               for k in range(space.dim))
        if "conv" in want:
            if data.w is None:
                out["conv"] = np.zeros((ne, P.phi.shape[1], P.phi.shape[1]))
            else:
                wv = np.asarray(data.w(P.x, t), dtype=float).reshape(len(P.x), -1)
                adv = np.einsum("nad,nd->na", P.grad, wv)
                out["conv"] = _pair_reduce(P.elem, wphi, adv, ne)
        if "rhs" in want:
            f = (data.f or _zero)(P.x, t)
            out["rhs"] = _reduce(P.elem, wphi * np.asarray(f)[:, None], ne)
    if {"nitsche", "rhs"} & set(want):
        dir_rules, neu_rules = _boundary_rules(space, geom, t, orders, data)
        beta = data.beta(space.p, space.mesh.hmax)
        nl = (space.p + 1) ** space.dim
        K = np.zeros((ne, nl, nl))
        b = np.zeros((ne, nl))
        for rule in dir_rules:
            P = _points(space, rule)
            dn = np.einsum("nad,nd->na", P.grad, P.normals)
            wphi = P.w[:, None] * P.phi
            if "nitsche" in want:
                K += _pair_reduce(P.elem, beta * wphi, P.phi, ne)
                K -= data.mu * _pair_reduce(P.elem, wphi, dn, ne)
                K -= data.mu * _pair_reduce(P.elem, P.w[:, None] * dn, P.phi, ne)
            if "rhs" in want and data.g_D is not None:
                g = np.asarray(data.g_D(P.x, t), dtype=float)
                b += _reduce(P.elem, (beta * P.phi - data.mu * dn) * (P.w * g)[:, None], ne)
        if "rhs" in want and data.g_N is not None:
            for rule in neu_rules:
                P = _points(space, rule, grads=False)
                g = np.asarray(data.g_N(P.x, t, P.normals), dtype=float)
                b += _reduce(P.elem, P.phi * (P.w * g)[:, None], ne)
        if "nitsche" in want:
            out["nitsche"] = K
        if "rhs" in want:
            out["rhs"] = out.get("rhs", 0.0) + b
    return out


def lateral_terms(space: AgFESpace, geom: SlabGeometry, t: float, orders: Orders) -> np.ndarray:
    """Element matrices of ``int_Gamma(t) V_n u v`` (V_n: normal velocity)."""
    ne = len(space.elem_cell)
    P = _points(space, geom.interface(t, orders.surface, space.cls.active_cells, with_velocity=True),
                grads=False)
    return _pair_reduce(P.elem, (P.w * P.vn)[:, None] * P.phi, P.phi, ne)


# ---------------------------------------------------------------------------
# slab forms
# ---------------------------------------------------------------------------

def _time_rule(space, geom, orders):
    ts, ws = geom.time_rule(orders.temporal, orders.split_at_crossings)
    psi = space.temporal_basis(ts)
    dpsi = space.temporal_basis(ts, 1)
    return ts, ws, psi, dpsi


def assemble_terms(space: AgFESpace, geom: SlabGeometry, data: ProblemData,
                   orders: Optional[Orders] = None,
                   terms=("dt", "jump", "mass", "stiff", "conv", "nitsche", "lateral")) -> Dict[str, sp.csr_matrix]:
    """Individual space-time matrices on the full active space.

    ``dt``: int_Q u_t v; ``jump``: int_{Omega(t0)} u(t0+) v(t0+);
    ``mass``: int_Q u v; ``stiff``: int mu grad u.grad v; ``conv``:
    int (w.grad u) v; ``nitsche``: penalty and consistency terms on the
    Dirichlet boundary; ``lateral``: int_J int_Gamma V_n u v.
    """
    orders = orders or Orders.default(space.p, space.q)
    ts, ws, psi, dpsi = _time_rule(space, geom, orders)
    want_sp = tuple({"mass", "stiff", "conv", "nitsche"} & set(terms)) + (("mass",) if "dt" in terms else ())
    S = {k: [] for k in set(want_sp) | ({"lateral"} & set(terms))}
    for t in ts:
        st = spatial_terms(space, geom, t, data, orders, want=tuple(set(want_sp)))
        for k in st:
            S[k].append(st[k])
        if "lateral" in terms:
            S["lateral"].append(lateral_terms(space, geom, t, orders))
    Tm = ws[:, None, None] * psi[:, :, None] * psi[:, None, :]
    Td = ws[:, None, None] * psi[:, :, None] * dpsi[:, None, :]
    out = {}
    for k in ("mass", "stiff", "conv", "nitsche", "lateral"):
        if k in terms:
            out[k] = scatter_matrix(space, _st_matrix(space, Tm, np.stack(S[k])))
    if "dt" in terms:
        out["dt"] = scatter_matrix(space, _st_matrix(space, Td, np.stack(S["mass"])))
    if "jump" in terms:
        t0 = space.slab[0]
        M0 = spatial_terms(space, geom, t0, data, orders, want=("mass",))["mass"]
        T0 = space.temporal_basis([t0])
        out["jump"] = scatter_matrix(space, _st_matrix(space, T0[:, :, None] * T0[:, None, :], M0[None]))
    return out


def _previous_rhs(space: AgFESpace, geom: SlabGeometry, prev, orders: Orders) -> np.ndarray:
    """Element vectors of ``int_{Omega(t0)} prev v(t0+)``."""
    t0 = space.slab[0]
    ne = len(space.elem_cell)
    qd = geom.volume(t0, orders.spatial, space.cls.active_cells)
    P = _points(space, qd, grads=False)
    if isinstance(prev, SpaceFunction) and prev.space is space:
        vals = prev.at(qd.cell, qd.xref, qd.simplex)
    else:
        vals = np.asarray(prev(qd.x, t0) if not isinstance(prev, SpaceFunction) else prev(qd.x),
                          dtype=float)
    F0 = _reduce(P.elem, P.phi * (P.w * vals)[:, None], ne)
    T0 = space.temporal_basis([t0])
    return _st_vector(space, T0, F0[None])


def assemble_slab(space: AgFESpace, geom: SlabGeometry, data: ProblemData, prev,
                  orders: Optional[Orders] = None, stabilisation=None,
                  keep_full: bool = False) -> SlabSystem:
    """Slab system ``B(u, v) = L(v)`` reduced to the free DOFs.

    ``prev`` is the trace ``u(t0-)`` as a callable ``prev(x, t)`` or a
    ``SpaceFunction``. ``stabilisation`` is an optional spatial matrix on the
    active DOFs (ghost penalty) added as ``kron(G, M_t)``.
    """
    orders = orders or Orders.default(space.p, space.q)
    ts, ws, psi, dpsi = _time_rule(space, geom, orders)
    Sm, Sa, Sf = [], [], []
    for t in ts:
        st = spatial_terms(space, geom, t, data, orders)
        Sm.append(st["mass"])
        Sa.append(st["stiff"] + st["conv"] + st["nitsche"])
        Sf.append(st["rhs"])
    Tm = ws[:, None, None] * psi[:, :, None] * psi[:, None, :]
    Td = ws[:, None, None] * psi[:, :, None] * dpsi[:, None, :]
    E = _st_matrix(space, Td, np.stack(Sm)) + _st_matrix(space, Tm, np.stack(Sa))
    t0 = space.slab[0]
    M0 = spatial_terms(space, geom, t0, data, orders, want=("mass",))["mass"]
    T0 = space.temporal_basis([t0])
    E += _st_matrix(space, T0[:, :, None] * T0[:, None, :], M0[None])
    A = scatter_matrix(space, E)
    if stabilisation is not None:
        A = A + sp.kron(stabilisation, temporal_mass(space), format="csr")
    Fe = _st_vector(space, ws[:, None] * psi, np.stack(Sf))
    if prev is not None:
        Fe += _previous_rhs(space, geom, prev, orders)
    b = scatter_vector(space, Fe)
    K = reduce_matrix(space, A)
    K.eliminate_zeros()
    sysm = SlabSystem(space, K, reduce_vector(space, b))
    if keep_full:
        sysm.full_matrix, sysm.full_rhs = A.tocsr(), b
    return sysm


def temporal_mass(space: AgFESpace) -> np.ndarray:
    ts, ws = gauss_1d(2 * space.q)
    t = space.slab[0] + space.tau * ts
    psi = space.temporal_basis(t)
    return (psi * (ws * space.tau)[:, None]).T @ psi


def assemble_mass(space: AgFESpace, geom: SlabGeometry, orders: Optional[Orders] = None,
                  reduce: bool = True) -> sp.csr_matrix:
    """``int_Q E(u) E(v)`` over the slab."""
    M = assemble_terms(space, geom, ProblemData(), orders, terms=("mass",))["mass"]
    return reduce_matrix(space, M) if reduce else M


def assemble_stiffness(space: AgFESpace, geom: SlabGeometry, data: ProblemData,
                       orders: Optional[Orders] = None, reduce: bool = True) -> sp.csr_matrix:
    """``int_J a_h(t; u, v) dt``: diffusion plus Nitsche terms."""
    T = assemble_terms(space, geom, data, orders, terms=("stiff", "nitsche"))
    A = T["stiff"] + T["nitsche"]
    return reduce_matrix(space, A) if reduce else A


# ---------------------------------------------------------------------------
# ghost penalties (spatial matrices on the unconstrained active space)
# ---------------------------------------------------------------------------

def _full_cell_rule(space, cells, order):
    rp, rw = tensor_rule(order, space.dim)
    mesh = space.mesh
    cells = np.asarray(cells, dtype=int)
    e = space.point_elements(np.repeat(cells, len(rw)), None, np.tile(rp, (len(cells), 1)))
    return e, rp, rw * mesh.cell_volume


def _cut_cells(space):
    return np.nonzero(space.cls.status == CellStatus.CUT)[0]


def ghost_penalty(space: AgFESpace, kind: str, gamma_g: float = 1.0, i_max: Optional[int] = None,
                  agg_space: Optional[AgFESpace] = None) -> sp.csr_matrix:
    """Spatial ghost-penalty matrix on the active DOFs of ``space``.

    ``weak-agfem`` penalises the distance to the aggregated extension
    (requires ``agg_space``), ``bulk`` the distance to the L2 projection onto
    P_p over each aggregate, ``face`` the jumps of normal derivatives of
    order 1..i_max across faces of cut cells.
    """
    mesh = space.mesh
    h = mesh.hmax
    n = space.n_dofs
    p = space.p
    nl = (p + 1) ** space.dim
    cut = _cut_cells(space)
    if kind == "weak-agfem":
        if agg_space is None:
            raise AssemblyError("weak-agfem ghost penalty needs the aggregated space")
        if agg_space.n_dofs != n:
            raise AssemblyError("aggregated space and active space differ")
        e, rp, rw = _full_cell_rule(space, cut, 2 * p)
        phi = tensor_basis(p, rp)
        Mloc = (phi * rw[:, None]).T @ phi
        Me = np.broadcast_to(Mloc, (len(cut), nl, nl)) * gamma_g / h ** 2
        ed = space.elem_dofs[space.cell_elem[cut]]
        M = sp.csr_matrix((Me.ravel(), (np.repeat(ed, nl, axis=1).ravel(), np.tile(ed, (1, nl)).ravel())),
                          shape=(n, n))
        R = sp.csr_matrix((np.ones(agg_space.n_free), (np.arange(agg_space.n_free), agg_space.free_dofs)),
                          shape=(agg_space.n_free, n))
        Pm = sp.identity(n, format="csr") - agg_space.C @ R
        return (Pm.T @ M @ Pm).tocsr()
    if kind == "bulk":
        return _bulk_penalty(space, agg_space, gamma_g)
    if kind == "face":
        return _face_penalty(space, gamma_g, p if i_max is None else int(i_max))
    raise AssemblyError(f"unknown ghost penalty kind {kind!r}")


def _monomials(p, x, center, scale):
    y = (x - center) / scale
    d = y.shape[1]
    exps = [a for a in np.ndindex(*(p + 1,) * d) if sum(a) <= p]
    return np.stack([np.prod(y ** np.array(a), axis=1) for a in exps], axis=1)


def _bulk_penalty(space, agg_space, gamma_g):
    mesh = space.mesh
    p = space.p
    h = mesh.hmax
    if agg_space is None or agg_space.agg is None:
        raise AssemblyError("bulk ghost penalty needs an aggregate map")
    agg = agg_space.agg
    cut = set(_cut_cells(space).tolist())
    rp, rw = tensor_rule(2 * p, space.dim)
    phi = tensor_basis(p, rp)
    rows, cols, vals = [], [], []
    for root, members in sorted(agg.aggregates.items()):
        mc = [c for c in members if c in cut]
        if not mc:
            continue
        members = np.asarray(members)
        dofs = np.unique(space.elem_dofs[space.cell_elem[members]])
        pos = {d: i for i, d in enumerate(dofs)}
        npt = len(rw)
        X = (mesh.cell_origin(np.repeat(members, npt)) + np.tile(rp * mesh.h, (len(members), 1)))
        W = np.tile(rw * mesh.cell_volume, len(members))
        B = np.zeros((len(X), len(dofs)))
        for k, c in enumerate(members):
            loc = [pos[d] for d in space.elem_dofs[space.cell_elem[c]]]
            B[k * npt:(k + 1) * npt, loc] = phi
        Pm = _monomials(p, X, mesh.cell_center(root), h)
        G = (Pm * W[:, None]).T @ Pm
        Pi = np.linalg.solve(G, (Pm * W[:, None]).T @ B)
        D = B - Pm @ Pi
        is_cut = np.repeat(np.isin(members, mc), npt)
        Dc = D[is_cut]
        K = gamma_g / h ** 2 * (Dc * W[is_cut, None]).T @ Dc
        rows.append(np.repeat(dofs, len(dofs)))
        cols.append(np.tile(dofs, len(dofs)))
        vals.append(K.ravel())
    n = space.n_dofs
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def cut_faces(space: AgFESpace):
    """Interior faces with both cells active and at least one cell cut.

    Returns ``(lower_cell, upper_cell, axis)`` arrays; lower is on the
    negative side of the face.
    """
    mesh = space.mesh
    cut = _cut_cells(space)
    active = space.cell_elem != -1
    lows, ups, axes = [], [], []
    seen = set()
    for c in cut:
        for axis in range(mesh.dim):
            for side in (0, 1):
                nb = mesh.face_neighbor(int(c), axis, side)
                if nb is None or not active[nb]:
                    continue
                lo, up = (nb, int(c)) if side == 0 else (int(c), nb)
                if (lo, up) in seen:
                    continue
                seen.add((lo, up))
                lows.append(lo)
                ups.append(up)
                axes.append(axis)
    return np.array(lows, dtype=int), np.array(ups, dtype=int), np.array(axes, dtype=int)


def _face_penalty(space, gamma_g, i_max):
    mesh = space.mesh
    p = space.p
    d = space.dim
    nl = (p + 1) ** d
    lo, up, ax = cut_faces(space)
    n = space.n_dofs
    if not len(lo):
        return sp.csr_matrix((n, n))
    g, gw = gauss_1d(2 * p)
    rows, cols, vals = [], [], []
    for axis in range(d):
        sel = np.nonzero(ax == axis)[0]
        if not len(sel):
            continue
        hf = mesh.h[axis]
        if d == 1:
            tpts = np.zeros((1, 0))
            tw = np.ones(1)
        else:
            tpts, tw = g[:, None], gw * mesh.h[1 - axis]
        npt = len(tw)
        xl = np.zeros((npt, d))
        xu = np.zeros((npt, d))
        others = [k for k in range(d) if k != axis]
        for j, k in enumerate(others):
            xl[:, k] = tpts[:, j]
            xu[:, k] = tpts[:, j]
        xl[:, axis] = 1.0
        xu[:, axis] = 0.0
        K = np.zeros((2 * nl, 2 * nl))
        for i in range(1, i_max + 1):
            alpha = [0] * d
            alpha[axis] = i
            J = np.concatenate([tensor_basis(p, xl, alpha, mesh.h), -tensor_basis(p, xu, alpha, mesh.h)], axis=1)
            K += (J * tw[:, None]).T @ J
        K *= gamma_g * hf
        dofs = np.concatenate([space.elem_dofs[space.cell_elem[lo[sel]]],
                               space.elem_dofs[space.cell_elem[up[sel]]]], axis=1)
        m = 2 * nl
        rows.append(np.repeat(dofs, m, axis=1).ravel())
        cols.append(np.tile(dofs, (1, m)).ravel())
        vals.append(np.broadcast_to(K.ravel(), (len(sel), m * m)).ravel())
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
