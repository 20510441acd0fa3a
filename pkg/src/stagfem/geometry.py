"""Cut-cell geometry: slab classification and cut quadratures.

The level set is sampled at the mesh vertices and interpolated linearly on
the Kuhn sub-simplices of every cell (one interval in 1D, two triangles
split along the (0,0)-(1,1) diagonal in 2D). On every sub-simplex the
interface is therefore a flat facet and the inside part is convex, so a
cut cell is the union of at most one convex piece per sub-simplex.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .levelset import LevelSetField
from .mesh import CartesianMesh
from .quadrature import gauss_1d, map_simplices, npoints_for, tensor_rule

FRACTION_TOL = 1e-10
SNAP_REL = 1e-12
MIN_PIECE_REL = 1e-14


class CellStatus(IntEnum):
    EXTERIOR = 0
    CUT = 1
    INTERIOR = 2


class GeometryError(RuntimeError):
    pass


def kuhn_simplices(dim: int) -> np.ndarray:
    if dim == 1:
        return np.array([[0, 1]])
    if dim == 2:
        return np.array([[0, 1, 3], [0, 3, 2]])
    raise NotImplementedError("cut geometry is implemented for dim <= 2")


def reference_vertices(dim: int) -> np.ndarray:
    return np.array(list(np.ndindex(*(2,) * dim)), dtype=float)[:, ::-1]


def simplex_of_point(dim: int, xref: np.ndarray) -> np.ndarray:
    """Kuhn sub-simplex containing reference points (ties to simplex 0)."""
    xref = np.atleast_2d(xref)
    if dim == 1:
        return np.zeros(len(xref), dtype=int)
    return (xref[:, 1] > xref[:, 0]).astype(int)


def vertex_values(mesh: CartesianMesh, ls: LevelSetField, t: float) -> np.ndarray:
    """Level set at the mesh vertices with near-zero values pushed outward."""
    v = np.asarray(ls.value(mesh.vertex_coordinates(), t), dtype=float)
    if not np.all(np.isfinite(v)):
        raise GeometryError(f"level set returned non-finite values at t={t}")
    eps = SNAP_REL * mesh.hmax
    return np.where(np.abs(v) < eps, eps, v)


# ---------------------------------------------------------------------------
# simplex clipping
# ---------------------------------------------------------------------------

def _cross(a, b, fa, fb):
    s = fa / (fa - fb)
    return a + s[:, None] * (b - a)


def _simplex_gradient(P, f):
    """Gradient of the linear interpolant on simplices P (m, d+1, d)."""
    d = P.shape[2]
    if d == 1:
        return ((f[:, 1] - f[:, 0]) / (P[:, 1, 0] - P[:, 0, 0]))[:, None]
    E = P[:, 1:, :] - P[:, :1, :]
    df = f[:, 1:] - f[:, :1]
    return np.linalg.solve(E, df[..., None])[..., 0]


def clip_simplices(P: np.ndarray, f: np.ndarray):
    """Clip simplices to ``{f < 0}`` with ``f`` linear on each simplex.

    ``P`` has shape (m, d+1, d), ``f`` shape (m, d+1) with no zero entries.
    Returns ``(sub, sub_parent, facets, facet_parent)`` where ``sub`` holds
    the inside sub-simplices and ``facets`` the interface facets (d points
    each).
    """
    m, nv, d = P.shape
    neg = f < 0
    nneg = neg.sum(axis=1)
    subs, sub_par, facs, fac_par = [], [], [], []

    full = np.nonzero(nneg == nv)[0]
    subs.append(P[full])
    sub_par.append(full)

    if d == 1:
        one = np.nonzero(nneg == 1)[0]
        if len(one):
            i = np.argmax(neg[one], axis=1)
            a = P[one, i]
            b = P[one, 1 - i]
            fa = f[one, i]
            fb = f[one, 1 - i]
            x = _cross(a, b, fa, fb)
            subs.append(np.stack([a, x], axis=1))
            sub_par.append(one)
            facs.append(x[:, None, :])
            fac_par.append(one)
    elif d == 2:
        for count in (1, 2):
            idx = np.nonzero(nneg == count)[0]
            if not len(idx):
                continue
            # pivot: the lone negative (count 1) or lone positive (count 2) vertex
            lone = neg[idx] if count == 1 else ~neg[idx]
            j = np.argmax(lone, axis=1)
            order = (j[:, None] + np.arange(3)[None, :]) % 3
            Q = np.take_along_axis(P[idx], order[:, :, None], axis=1)
            g = np.take_along_axis(f[idx], order, axis=1)
            xa = _cross(Q[:, 0], Q[:, 1], g[:, 0], g[:, 1])
            xb = _cross(Q[:, 0], Q[:, 2], g[:, 0], g[:, 2])
            if count == 1:
                subs.append(np.stack([Q[:, 0], xa, xb], axis=1))
                sub_par.append(idx)
            else:
                subs.append(np.stack([Q[:, 1], Q[:, 2], xb], axis=1))
                subs.append(np.stack([Q[:, 1], xb, xa], axis=1))
                sub_par.extend([idx, idx])
            facs.append(np.stack([xa, xb], axis=1))
            fac_par.append(idx)
    else:
        raise NotImplementedError

    sub = np.concatenate(subs) if subs else np.zeros((0, nv, d))
    sp = np.concatenate(sub_par).astype(int)
    fac = np.concatenate(facs) if facs else np.zeros((0, d, d))
    fp = np.concatenate(fac_par).astype(int) if fac_par else np.zeros(0, dtype=int)
    return sub, sp, fac, fp


def simplex_volumes(S: np.ndarray) -> np.ndarray:
    d = S.shape[2]
    E = S[:, 1:, :] - S[:, :1, :]
    if d == 1:
        return np.abs(E[:, 0, 0])
    return np.abs(np.linalg.det(E)) / 2.0


# ---------------------------------------------------------------------------
# per-time cut data for a batch of cells
# ---------------------------------------------------------------------------

@dataclass
class CutPieces:
    """Sub-triangulation of a batch of cells at one time.

    Coordinates are local physical coordinates (``x - cell_origin``).
    ``*_cell`` entries index the batch, not the mesh.
    """
    sub: np.ndarray
    sub_cell: np.ndarray
    sub_simplex: np.ndarray
    facets: np.ndarray
    facet_cell: np.ndarray
    facet_simplex: np.ndarray
    facet_normal: np.ndarray
    facet_grad_norm: np.ndarray
    facet_parent_vertices: np.ndarray


def cut_pieces(mesh: CartesianMesh, cells: np.ndarray, vvals: np.ndarray) -> CutPieces:
    d = mesh.dim
    cells = np.asarray(cells, dtype=int)
    kuhn = kuhn_simplices(d)
    vloc = reference_vertices(d) * mesh.h
    f = vvals[mesh.cell_vertices(cells)]
    m = len(cells)
    ns = len(kuhn)
    P = np.broadcast_to(vloc[kuhn][None], (m, ns, d + 1, d)).reshape(-1, d + 1, d)
    F = f[:, kuhn].reshape(-1, d + 1)
    sub, sp, fac, fp = clip_simplices(P, F)
    vol = simplex_volumes(sub)
    keep = vol > MIN_PIECE_REL * mesh.cell_volume
    sub, sp = sub[keep], sp[keep]
    grad = _simplex_gradient(P[fp], F[fp]) if len(fp) else np.zeros((0, d))
    gnorm = np.linalg.norm(grad, axis=1)
    normal = grad / np.where(gnorm > 0, gnorm, 1.0)[:, None]
    return CutPieces(
        sub=sub, sub_cell=sp // ns, sub_simplex=sp % ns,
        facets=fac, facet_cell=fp // ns, facet_simplex=fp % ns,
        facet_normal=normal, facet_grad_norm=gnorm,
        facet_parent_vertices=P[fp],
    )


def inside_fractions(mesh: CartesianMesh, vvals: np.ndarray, cells=None) -> np.ndarray:
    """|T ∩ Ω_h(t)| / |T| for the requested cells (all by default)."""
    if cells is None:
        cells = np.arange(mesh.num_cells)
    cells = np.asarray(cells, dtype=int)
    f = vvals[mesh.cell_vertices(cells)]
    out = np.zeros(len(cells))
    out[np.all(f < 0, axis=1)] = 1.0
    mixed = np.nonzero(np.any(f < 0, axis=1) & np.any(f > 0, axis=1))[0]
    if len(mixed):
        pcs = cut_pieces(mesh, cells[mixed], vvals)
        vol = np.bincount(pcs.sub_cell, weights=simplex_volumes(pcs.sub), minlength=len(mixed))
        out[mixed] = vol / mesh.cell_volume
    return out


def n_components(mesh: CartesianMesh, cells: np.ndarray, vvals: np.ndarray) -> np.ndarray:
    """Connected components of T ∩ Ω_h(t) per cell (0, 1 or 2 in 2D).

    Each Kuhn piece is convex; the two pieces of a square are connected iff
    the shared diagonal has an inside portion.
    """
    cells = np.asarray(cells, dtype=int)
    d = mesh.dim
    f = vvals[mesh.cell_vertices(cells)]
    kuhn = kuhn_simplices(d)
    has = np.stack([np.any(f[:, s] < 0, axis=1) for s in kuhn], axis=1)
    count = has.sum(axis=1)
    if d == 2:
        diag_in = (f[:, 0] < 0) | (f[:, 3] < 0)
        count = np.where((count == 2) & diag_in, 1, count)
    return count


# ---------------------------------------------------------------------------
# slab classification
# ---------------------------------------------------------------------------

@dataclass
class SlabClassification:
    mesh: CartesianMesh
    slab: tuple
    sample_times: np.ndarray
    status: np.ndarray
    eta: np.ndarray
    well_posed: np.ndarray
    eta0: float = 1.0
    n: Optional[int] = None
    fractions: np.ndarray = field(default=None, repr=False)

    @property
    def active(self) -> np.ndarray:
        return self.status != CellStatus.EXTERIOR

    @property
    def active_cells(self) -> np.ndarray:
        return np.nonzero(self.active)[0]

    @property
    def cut_cells(self) -> np.ndarray:
        return np.nonzero(self.status == CellStatus.CUT)[0]

    @property
    def interior_cells(self) -> np.ndarray:
        return np.nonzero(self.status == CellStatus.INTERIOR)[0]

    @property
    def well_posed_cells(self) -> np.ndarray:
        return np.nonzero(self.well_posed)[0]

    @property
    def ill_posed_cells(self) -> np.ndarray:
        return np.nonzero(self.active & ~self.well_posed)[0]


def sample_times(slab, n_time_samples: int) -> np.ndarray:
    """Slab end points plus ``n - 2`` interior Gauss points."""
    t0, t1 = map(float, slab)
    n = int(n_time_samples)
    if n < 2:
        raise ValueError("n_time_samples must be >= 2")
    inner = []
    if n > 2:
        x, _ = np.polynomial.legendre.leggauss(n - 2)
        inner = t0 + 0.5 * (x + 1.0) * (t1 - t0)
    return np.sort(np.concatenate([[t0, t1], inner]))


def default_time_samples(q: int) -> int:
    return max(q + 2, 5)


def classify_slab(mesh: CartesianMesh, ls: LevelSetField, slab, n_time_samples: int = 5,
                  eta0: float = 1.0, times=None, n: Optional[int] = None,
                  require_well_posed: bool = True) -> SlabClassification:
    """Interior/cut/exterior status and well-posedness of every cell.

    The in-domain fraction is evaluated at the sample times and its minimum
    approximates eta. ``times`` overrides the default sample set.
    """
    if not 0.0 < eta0 <= 1.0:
        raise ValueError("eta0 must lie in (0, 1]")
    ts = sample_times(slab, n_time_samples) if times is None else np.sort(np.asarray(times, float))
    fr = np.stack([inside_fractions(mesh, vertex_values(mesh, ls, t)) for t in ts])
    lo = fr.min(axis=0)
    hi = fr.max(axis=0)
    status = np.full(mesh.num_cells, CellStatus.CUT, dtype=np.int8)
    status[hi <= FRACTION_TOL] = CellStatus.EXTERIOR
    status[lo >= 1.0 - FRACTION_TOL] = CellStatus.INTERIOR
    eta = np.where(status == CellStatus.EXTERIOR, np.nan, lo)
    eta[status == CellStatus.INTERIOR] = 1.0
    well = (status != CellStatus.EXTERIOR) & (np.nan_to_num(eta, nan=-1.0) >= eta0 - 1e-14)
    if require_well_posed and not well.any():
        where = f"slab {n}" if n is not None else f"slab {tuple(slab)}"
        raise GeometryError(f"no well-posed cell found in {where}")
    return SlabClassification(mesh, tuple(map(float, slab)), ts, status, eta, well, eta0, n, fr)


# ---------------------------------------------------------------------------
# quadratures
# ---------------------------------------------------------------------------

@dataclass
class CutQuadrature:
    """Flat quadrature over one or several cells.

    ``cell`` holds mesh cell ids, ``simplex`` the Kuhn sub-simplex each point
    came from (-1 for points of an uncut tensor rule), ``xref`` the
    reference-cell coordinates. Surface rules also carry unit ``normals``.
    """
    cell: np.ndarray
    simplex: np.ndarray
    x: np.ndarray
    xref: np.ndarray
    weights: np.ndarray
    normals: Optional[np.ndarray] = None
    normal_velocity: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.weights)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def select(self, mask) -> "CutQuadrature":
        sel = lambda a: None if a is None else a[mask]
        return CutQuadrature(self.cell[mask], self.simplex[mask], self.x[mask], self.xref[mask],
                             self.weights[mask], sel(self.normals), sel(self.normal_velocity))

    @staticmethod
    def empty(dim: int, surface: bool = False) -> "CutQuadrature":
        z = np.zeros(0)
        zi = np.zeros(0, dtype=int)
        zd = np.zeros((0, dim))
        return CutQuadrature(zi, zi, zd, zd, z, zd if surface else None, z if surface else None)


def _finish(mesh, cell, simplex, xloc, w, normals=None, vn=None, sort=True):
    xref = xloc / mesh.h
    x = mesh.cell_origin(cell) + xloc if len(cell) else xloc
    if sort and len(cell):
        o = np.argsort(cell, kind="stable")
        cell, simplex, x, xref, w = cell[o], simplex[o], x[o], xref[o], w[o]
        normals = None if normals is None else normals[o]
        vn = None if vn is None else vn[o]
    return CutQuadrature(cell, simplex, x, xref, w, normals, vn)


def volume_quadrature(mesh: CartesianMesh, cells, vvals: np.ndarray, order: int) -> CutQuadrature:
    """Quadrature of T ∩ Ω_h(t) for every cell in ``cells`` (sorted by cell).

    Uncut cells use the tensor Gauss rule exact for Q_order; cut cells a
    simplex rule exact for total degree ``dim * order`` on every piece.
    """
    d = mesh.dim
    cells = np.asarray(cells, dtype=int)
    f = vvals[mesh.cell_vertices(cells)] if len(cells) else np.zeros((0, 2 ** d))
    full = cells[np.all(f < 0, axis=1)]
    mixed = cells[np.any(f < 0, axis=1) & np.any(f > 0, axis=1)]
    rp, rw = tensor_rule(order, d)
    c_full = np.repeat(full, len(rw))
    s_full = np.full(len(c_full), -1)
    x_full = np.tile(rp * mesh.h, (len(full), 1))
    w_full = np.tile(rw * mesh.cell_volume, len(full))
    if len(mixed):
        pcs = cut_pieces(mesh, mixed, vvals)
        pts, wts, par = map_simplices(pcs.sub, d * order)
        c_cut = mixed[pcs.sub_cell[par]]
        s_cut = pcs.sub_simplex[par]
    else:
        pts, wts = np.zeros((0, d)), np.zeros(0)
        c_cut, s_cut = np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    return _finish(mesh, np.concatenate([c_full, c_cut]), np.concatenate([s_full, s_cut]),
                   np.concatenate([x_full, pts]), np.concatenate([w_full, wts]))


def _surface_from_facets(mesh, cells, pcs, order, vdt=None):
    d = mesh.dim
    nf = len(pcs.facet_cell)
    if d == 1:
        pts = pcs.facets[:, 0, :]
        wts = np.ones(nf)
        par = np.arange(nf)
    else:
        g, gw = gauss_1d(order)
        a, b = pcs.facets[:, 0, :], pcs.facets[:, 1, :]
        L = np.linalg.norm(b - a, axis=1)
        pts = (a[:, None, :] + g[None, :, None] * (b - a)[:, None, :]).reshape(-1, d)
        wts = (L[:, None] * gw[None, :]).ravel()
        par = np.repeat(np.arange(nf), len(g))
    vn = None
    if vdt is not None:
        # time derivative of the linear interpolant at the facet points
        P = pcs.facet_parent_vertices[par]
        dval = vdt[par]
        bary = _barycentric(P, pts)
        dphi = np.sum(bary * dval, axis=1)
        vn = -dphi / pcs.facet_grad_norm[par]
    keep = wts > 0
    cell = np.asarray(cells)[pcs.facet_cell[par]]
    out = _finish(mesh, cell[keep], pcs.facet_simplex[par][keep], pts[keep], wts[keep],
                  pcs.facet_normal[par][keep], None if vn is None else vn[keep])
    return out


def _barycentric(P, x):
    d = P.shape[2]
    E = np.transpose(P[:, 1:, :] - P[:, :1, :], (0, 2, 1))
    lam = np.linalg.solve(E, (x - P[:, 0, :])[..., None])[..., 0]
    return np.concatenate([1.0 - lam.sum(axis=1, keepdims=True), lam], axis=1)


def interface_quadrature_batch(mesh: CartesianMesh, cells, vvals: np.ndarray, order: int,
                               vdt: Optional[np.ndarray] = None) -> CutQuadrature:
    """Rule on the linearised zero level set inside ``cells``.

    Normals point out of the domain. If vertex time derivatives ``vdt`` of
    the level set are given, the normal velocity of the discrete interface
    is returned as well.
    """
    d = mesh.dim
    cells = np.asarray(cells, dtype=int)
    f = vvals[mesh.cell_vertices(cells)] if len(cells) else np.zeros((0, 2 ** d))
    mixed = cells[np.any(f < 0, axis=1) & np.any(f > 0, axis=1)]
    if not len(mixed):
        return CutQuadrature.empty(d, surface=True)
    pcs = cut_pieces(mesh, mixed, vvals)
    fdt = None
    if vdt is not None:
        kuhn = kuhn_simplices(d)
        loc = vdt[mesh.cell_vertices(mixed)][:, kuhn].reshape(-1, d + 1)
        fdt = loc[pcs.facet_cell * len(kuhn) + pcs.facet_simplex]
    return _surface_from_facets(mesh, mixed, pcs, order, fdt)


def face_quadrature(mesh: CartesianMesh, cells, vvals: np.ndarray, order: int,
                    which: str = "boundary") -> CutQuadrature:
    """Rule on the inside part of cell faces.

    ``which='boundary'`` keeps faces on the box boundary only, ``'all'``
    every face of every cell (normals point out of the cell).
    """
    d = mesh.dim
    cells = np.asarray(cells, dtype=int)
    rv = reference_vertices(d)
    cv = mesh.cell_vertices(cells) if len(cells) else np.zeros((0, 2 ** d), dtype=int)
    idx = mesh.cell_index(cells).reshape(-1, d)
    out_c, out_s, out_x, out_w, out_n = [], [], [], [], []
    for axis in range(d):
        for side in (0, 1):
            lv = np.nonzero(rv[:, axis] == side)[0]
            if which == "boundary":
                on = idx[:, axis] == (0 if side == 0 else mesh.n_cells[axis] - 1)
            else:
                on = np.ones(len(cells), dtype=bool)
            sel = np.nonzero(on)[0]
            if not len(sel):
                continue
            normal = np.zeros(d)
            normal[axis] = 1.0 if side else -1.0
            f = vvals[cv[sel][:, lv]]
            P = np.broadcast_to((rv[lv] * mesh.h)[None], (len(sel), len(lv), d))
            if d == 1:
                ok = f[:, 0] < 0
                out_c.append(cells[sel][ok])
                out_x.append(P[ok, 0, :])
                out_w.append(np.ones(ok.sum()))
            else:
                # faces are segments; clip the linear trace to f < 0
                a, b = P[:, 0, :].copy(), P[:, 1, :].copy()
                fa, fb = f[:, 0], f[:, 1]
                na, nb = fa < 0, fb < 0
                keep = na | nb
                cross = _cross(a, b, fa, np.where(fa == fb, fa + 1.0, fb))
                a2 = np.where(na[:, None], a, cross)
                b2 = np.where((na & nb)[:, None], b, np.where(na[:, None], cross, b))
                a2, b2 = a2[keep], b2[keep]
                g, gw = gauss_1d(order)
                L = np.linalg.norm(b2 - a2, axis=1)
                pts = (a2[:, None, :] + g[None, :, None] * (b2 - a2)[:, None, :]).reshape(-1, d)
                out_c.append(np.repeat(cells[sel][keep], len(g)))
                out_x.append(pts)
                out_w.append((L[:, None] * gw[None, :]).ravel())
            out_n.append(np.broadcast_to(normal, (len(out_w[-1]), d)))
    if not out_c:
        return CutQuadrature.empty(d, surface=True)
    cell = np.concatenate(out_c).astype(int)
    w = np.concatenate(out_w)
    xloc = np.concatenate(out_x)
    keep = w > 0
    return _finish(mesh, cell[keep], simplex_of_point(d, xloc[keep] / mesh.h), xloc[keep], w[keep],
                   np.concatenate(out_n)[keep])


def cut_cell_quadrature(mesh: CartesianMesh, cell: int, ls: LevelSetField, t: float,
                        order: int) -> CutQuadrature:
    cell = mesh.check_cell(cell)
    q = volume_quadrature(mesh, [cell], vertex_values(mesh, ls, t), order)
    if len(q) == 0:
        raise GeometryError(f"cell {cell} is exterior at t={t}")
    return q


def interface_quadrature(mesh: CartesianMesh, cell: int, ls: LevelSetField, t: float,
                         order: int, with_velocity: bool = False) -> CutQuadrature:
    cell = mesh.check_cell(cell)
    vv = vertex_values(mesh, ls, t)
    f = vv[mesh.cell_vertices([cell])[0]]
    if not (np.any(f < 0) and np.any(f > 0)):
        raise GeometryError(f"cell {cell} is not cut at t={t}")
    vdt = ls.dt(mesh.vertex_coordinates(), t) if with_velocity else None
    return interface_quadrature_batch(mesh, [cell], vv, order, vdt)


def temporal_rule(slab, order: int, breakpoints=()):
    """Gauss-Legendre points/weights on the slab (composite at breakpoints)."""
    t0, t1 = map(float, slab)
    cuts = [t0] + sorted(b for b in breakpoints if t0 < b < t1) + [t1]
    g, w = gauss_1d(order)
    ts, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        ts.append(a + g * (b - a))
        ws.append(w * (b - a))
    return np.concatenate(ts), np.concatenate(ws)


def vertex_crossing_times(mesh: CartesianMesh, ls: LevelSetField, slab, cells=None,
                          n_scan: int = 8) -> list:
    """Times in the slab where a vertex of ``cells`` changes sign."""
    t0, t1 = map(float, slab)
    verts = mesh.vertex_coordinates()
    ids = np.arange(mesh.num_vertices) if cells is None else np.unique(mesh.cell_vertices(cells))
    ts = np.linspace(t0, t1, n_scan + 1)
    vals = np.stack([ls.value(verts[ids], t) for t in ts])
    out = []
    for k in range(n_scan):
        flip = np.nonzero(np.sign(vals[k]) * np.sign(vals[k + 1]) < 0)[0]
        for v in flip:
            x = verts[ids[v]][None]
            out.append(brentq(lambda s: ls.value(x, s)[0], ts[k], ts[k + 1], xtol=1e-15))
    return sorted(set(out))


def spacetime_quadrature(mesh: CartesianMesh, cell: int, ls: LevelSetField, slab,
                         spatial_order: int, temporal_order: int,
                         split_at_crossings: bool = False) -> list:
    """Fubini rule on the space-time cell: ``[(t_k, w_k, CutQuadrature), ...]``.

    Times where the cell is empty contribute an empty spatial rule.
    """
    cell = mesh.check_cell(cell)
    bps = vertex_crossing_times(mesh, ls, slab, [cell]) if split_at_crossings else ()
    ts, ws = temporal_rule(slab, temporal_order, bps)
    out = []
    for t, w in zip(ts, ws):
        out.append((float(t), float(w), volume_quadrature(mesh, [cell], vertex_values(mesh, ls, t),
                                                          spatial_order)))
    return out


class SlabGeometry:
    """Per-slab geometric context with cached vertex values."""

    def __init__(self, mesh: CartesianMesh, ls: LevelSetField, cls: SlabClassification):
        self.mesh = mesh
        self.ls = ls
        self.cls = cls
        self._vv = {}
        self._vdt = {}

    @property
    def slab(self):
        return self.cls.slab

    def vvals(self, t: float) -> np.ndarray:
        key = float(t)
        if key not in self._vv:
            self._vv[key] = vertex_values(self.mesh, self.ls, key)
        return self._vv[key]

    def vdt(self, t: float) -> np.ndarray:
        key = float(t)
        if key not in self._vdt:
            self._vdt[key] = np.asarray(self.ls.dt(self.mesh.vertex_coordinates(), key), float)
        return self._vdt[key]

    def volume(self, t, order, cells=None) -> CutQuadrature:
        cells = self.cls.active_cells if cells is None else cells
        return volume_quadrature(self.mesh, cells, self.vvals(t), order)

    def interface(self, t, order, cells=None, with_velocity=False) -> CutQuadrature:
        cells = self.cls.cut_cells if cells is None else cells
        return interface_quadrature_batch(self.mesh, cells, self.vvals(t), order,
                                          self.vdt(t) if with_velocity else None)

    def boundary(self, t, order, cells=None) -> CutQuadrature:
        cells = self.cls.active_cells if cells is None else cells
        return face_quadrature(self.mesh, cells, self.vvals(t), order, "boundary")

    def time_rule(self, order, split_at_crossings=False):
        bps = ()
        if split_at_crossings:
            bps = vertex_crossing_times(self.mesh, self.ls, self.slab, self.cls.active_cells)
        return temporal_rule(self.slab, order, bps)


def write_subtriangulation_vtk(path, mesh: CartesianMesh, ls: LevelSetField, t: float, cells=None):
    """Dump the inside sub-simplices of ``cells`` at time ``t`` (legacy VTK)."""
    from .vtk import write_unstructured

    if cells is None:
        cells = np.arange(mesh.num_cells)
    vv = vertex_values(mesh, ls, t)
    cells = np.asarray(cells)
    f = vv[mesh.cell_vertices(cells)]
    pcs = cut_pieces(mesh, cells[np.any(f < 0, axis=1)], vv)
    sel = cells[np.any(f < 0, axis=1)]
    pts = (mesh.cell_origin(sel[pcs.sub_cell])[:, None, :] + pcs.sub).reshape(-1, mesh.dim)
    conn = np.arange(len(pts)).reshape(-1, mesh.dim + 1)
    write_unstructured(path, pts, conn, cell_data={"cell": sel[pcs.sub_cell].astype(float)})
