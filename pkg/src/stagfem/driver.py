"""Slab marching, error norms and the experiment procedures."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import scipy.sparse as sp

from . import levelset as lsm
from .aggregation import AggregateMap, aggregate_slab, duplicate_disconnected
from .assembly import (Orders, ProblemData, SlabSystem, _points, _reduce, assemble_mass,
                       assemble_slab, assemble_stiffness, ghost_penalty, spatial_terms)
from .geometry import (CellStatus, SlabClassification, SlabGeometry, classify_slab,
                       default_time_samples)
from .levelset import LevelSetField
from .mesh import CartesianMesh, TimeSlabbing, build_mesh
from .solver import condition_number_1, solve_slab
from .spaces import (AgFESpace, SlabFunction, SpaceFunction, build_space, restrict_at_time,
                     tensor_gradient, tensor_hessian)

STABILISATIONS = ("agfem", "ghost-weak", "ghost-bulk", "ghost-face", "none")


class SlabFailure(RuntimeError):
    def __init__(self, n: int, cause: Exception):
        super().__init__(f"slab {n}: {cause}")
        self.n = n
        self.cause = cause


@dataclass
class ExactSolution:
    """Analytic solution with spatial derivatives, all callables ``(x, t)``."""
    u: Callable
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None


def manufactured_solution(mu: float = 1.0, t_end: float = 1.0, lx: float = 2.0, ly: float = 1.0):
    """``sin(pi x/lx) sin(pi y/ly) exp(-2 mu pi^2 t / T)`` and its source."""
    a, b = np.pi / lx, np.pi / ly
    c = -2.0 * mu * np.pi ** 2 / t_end

    def u(x, t):
        return np.sin(a * x[:, 0]) * np.sin(b * x[:, 1]) * np.exp(c * t)

    def grad(x, t):
        e = np.exp(c * t)
        return np.stack([a * np.cos(a * x[:, 0]) * np.sin(b * x[:, 1]) * e,
                         b * np.sin(a * x[:, 0]) * np.cos(b * x[:, 1]) * e], axis=1)

    def hess(x, t):
        e = np.exp(c * t)
        sx, cx = np.sin(a * x[:, 0]), np.cos(a * x[:, 0])
        sy, cy = np.sin(b * x[:, 1]), np.cos(b * x[:, 1])
        hxx = -a * a * sx * sy * e
        hyy = -b * b * sx * sy * e
        hxy = a * b * cx * cy * e
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

    def f(x, t):
        return (c + mu * (a * a + b * b)) * u(x, t)

    return ExactSolution(u, grad, hess), f


@dataclass
class ProblemSpec:
    mesh: CartesianMesh
    levelset: LevelSetField
    slabbing: TimeSlabbing
    p: int
    q: int
    data: ProblemData
    u0: Callable
    stabilisation: str = "agfem"
    eta0: float = 1.0
    n_time_samples: Optional[int] = None
    quad_extra: int = 0
    split_at_crossings: bool = False
    gamma_g: float = 1.0
    i_max: Optional[int] = None
    duplicate: bool = False
    conditioning: bool = False

    def __post_init__(self):
        if self.stabilisation not in STABILISATIONS:
            raise ValueError(f"unknown stabilisation {self.stabilisation!r}")

    @property
    def orders(self) -> Orders:
        return Orders.default(self.p, self.q, self.quad_extra, self.split_at_crossings)

    @property
    def samples(self) -> int:
        return self.n_time_samples or default_time_samples(self.q)


@dataclass
class SlabRecord:
    n: int
    cls: SlabClassification
    agg: AggregateMap
    space: AgFESpace
    geom: SlabGeometry
    solution: SlabFunction
    prev: object
    residual: float
    diagnostics: Dict = field(default_factory=dict)

    @property
    def n_free(self) -> int:
        return self.space.n_free_st

    def trace(self, t: float) -> SpaceFunction:
        return restrict_at_time(self.space, self.solution, t)


@dataclass
class SimulationResult:
    spec: ProblemSpec
    initial: SpaceFunction
    slabs: List[SlabRecord]


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def setup_slab(spec: ProblemSpec, n: int):
    slab = spec.slabbing.slab(n)
    cls = classify_slab(spec.mesh, spec.levelset, slab, spec.samples, spec.eta0, n=n)
    agg = aggregate_slab(spec.mesh, cls)
    if spec.duplicate:
        agg = duplicate_disconnected(cls, agg, spec.levelset, slab)
    aggregated = spec.stabilisation == "agfem"
    space = build_space(spec.mesh, cls, agg, spec.p, spec.q, aggregate=aggregated)
    geom = SlabGeometry(spec.mesh, spec.levelset, cls)
    return cls, agg, space, geom


def spatial_mass(space: AgFESpace, geom: SlabGeometry, t: float, order: int) -> sp.csr_matrix:
    """Spatial mass matrix on Omega(t) over the active DOFs."""
    M = spatial_terms(space, geom, t, ProblemData(), Orders(order, 1, order), want=("mass",))["mass"]
    ed = space.elem_dofs
    nl = ed.shape[1]
    return sp.csr_matrix((M.ravel(), (np.repeat(ed, nl, axis=1).ravel(), np.tile(ed, (1, nl)).ravel())),
                         shape=(space.n_dofs, space.n_dofs))


def project_initial(space: AgFESpace, geom: SlabGeometry, u0: Callable, order: Optional[int] = None,
                    t: Optional[float] = None) -> SpaceFunction:
    """L2 projection of ``u0`` onto the constrained spatial space over Omega(t0)."""
    t = space.slab[0] if t is None else t
    order = 2 * space.p + 2 if order is None else order
    M = spatial_mass(space, geom, t, order)
    qd = geom.volume(t, order, space.cls.active_cells)
    P = _points(space, qd, grads=False)
    vals = np.asarray(u0(qd.x, t), dtype=float) * np.ones(len(qd))
    be = _reduce(P.elem, P.phi * (P.w * vals)[:, None], len(space.elem_cell))
    b = np.bincount(space.elem_dofs.ravel(), weights=be.ravel(), minlength=space.n_dofs)
    C = space.C
    K = (C.T @ M @ C).tocsc()
    coef = solve_slab((K, C.T @ b))
    return SpaceFunction(space, C @ coef)


def run(spec: ProblemSpec, callback: Optional[Callable] = None, keep: bool = True) -> SimulationResult:
    """March over the slabs: classify, aggregate, assemble, solve."""
    records: List[SlabRecord] = []
    prev = None
    initial = None
    for n in range(1, spec.slabbing.n_slabs + 1):
        try:
            cls, agg, space, geom = setup_slab(spec, n)
            if n == 1:
                proj_space = space if spec.stabilisation == "agfem" else build_space(
                    spec.mesh, cls, agg, spec.p, spec.q, aggregate=True)
                initial = project_initial(proj_space, geom, spec.u0)
                prev = initial
            stab = None
            if spec.stabilisation.startswith("ghost"):
                kind = {"ghost-weak": "weak-agfem", "ghost-bulk": "bulk", "ghost-face": "face"}[spec.stabilisation]
                agg_space = build_space(spec.mesh, cls, agg, spec.p, spec.q, aggregate=True)
                stab = ghost_penalty(space, kind, spec.gamma_g, spec.i_max, agg_space=agg_space)
            system = assemble_slab(space, geom, spec.data, prev, spec.orders, stabilisation=stab)
            x = solve_slab(system)
            sol = SlabFunction(space, x)
            diag = {"n_free": space.n_free_st, "n_active": space.n_dofs_st,
                    "n_cut": int((cls.status == CellStatus.CUT).sum())}
            if spec.conditioning:
                diag["kappa_M"] = condition_number_1(assemble_mass(space, geom)).value
                diag["kappa_A"] = condition_number_1(assemble_stiffness(space, geom, spec.data)).value
            rec = SlabRecord(n, cls, agg, space, geom, sol, prev, system.info["residual"], diag)
        except SlabFailure:
            raise
        except Exception as exc:
            raise SlabFailure(n, exc) from exc
        if callback is not None:
            callback(rec)
        prev = rec.trace(space.slab[1])
        if keep:
            records.append(rec)
        else:
            records[-1:] = [rec]
    return SimulationResult(spec, initial, records)


# ---------------------------------------------------------------------------
# error norms
# ---------------------------------------------------------------------------

def _l2_on(space, geom, t, order, fun) -> float:
    qd = geom.volume(t, order, space.cls.active_cells)
    return float(np.sum(qd.weights * fun(qd) ** 2))


def error_norms(result: SimulationResult, exact: ExactSolution, c_mu: float = 1.0,
                extra: int = 2) -> Dict[str, float]:
    """Accumulated DG norm of the error and the final-time L2 error."""
    if exact.grad is None or exact.hess is None:
        raise ValueError("error norms need the exact gradient and Hessian")
    spec = result.spec
    data = spec.data
    jumps = 0.0
    vol = 0.0
    for k, rec in enumerate(result.slabs):
        space, geom = rec.space, rec.geom
        p = space.p
        order = 2 * p + extra
        t0, t1 = space.slab
        plus = rec.trace(t0)
        minus = result.initial if k == 0 else result.slabs[k - 1].trace(t0)
        jumps += _l2_on(space, geom, t0, order,
                        lambda qd: plus.at(qd.cell, qd.xref, qd.simplex) - minus(qd.x))
        ts, ws = geom.time_rule(2 * spec.q + 1 + extra, spec.split_at_crossings)
        beta = data.beta(p, spec.mesh.hmax)
        h2 = spec.mesh.hmax ** 2
        for t, w in zip(ts, ws):
            ut = rec.trace(t)
            qd = geom.volume(t, order, space.cls.active_cells)
            e = space.point_elements(qd.cell, qd.simplex, qd.xref)
            U = ut.values[space.elem_dofs[e]]
            gh = np.einsum("nad,na->nd", tensor_gradient(p, qd.xref, space.mesh.h), U)
            hh = np.einsum("naij,na->nij", tensor_hessian(p, qd.xref, space.mesh.h), U)
            eg = exact.grad(qd.x, t) - gh
            eh = exact.hess(qd.x, t) - hh
            val = data.mu * np.sum(qd.weights * np.sum(eg ** 2, axis=1))
            val += data.mu * h2 * np.sum(qd.weights * np.sum(eh ** 2, axis=(1, 2)))
            for rule in _dirichlet_rules(space, geom, t, order, data):
                if len(rule):
                    ev = exact.u(rule.x, t) - ut.at(rule.cell, rule.xref, rule.simplex)
                    val += beta * np.sum(rule.weights * ev ** 2)
            vol += w * val
    last = result.slabs[-1]
    tN = last.space.slab[1]
    fin = last.trace(tN)
    l2 = _l2_on(last.space, last.geom, tN, 2 * last.space.p + extra,
                lambda qd: exact.u(qd.x, tN) - fin.at(qd.cell, qd.xref, qd.simplex))
    total = l2 + jumps + c_mu * vol
    return {"accumulated_dg": float(np.sqrt(total)), "l2_final": float(np.sqrt(l2)),
            "jumps": float(np.sqrt(jumps)), "energy": float(np.sqrt(vol))}


def _dirichlet_rules(space, geom, t, order, data):
    out = []
    if data.interface_bc == "dirichlet":
        out.append(geom.interface(t, order, space.cls.active_cells))
    if data.box_bc == "dirichlet":
        out.append(geom.boundary(t, order, space.cls.active_cells))
    return out


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def fit_rate(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if np.any(err <= 0) or not np.all(np.isfinite(err)):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


EXACT_LEVEL = 1e-11


@dataclass
class ConvergenceTable:
    h: List[float]
    dg_error: List[float]
    l2_final: List[float]
    dg_rate: float
    l2_rate: float
    exact: bool = False

    def local_rates(self, which: str = "dg_error") -> List[float]:
        e = getattr(self, which)
        out = [float("nan")]
        for k in range(1, len(e)):
            out.append(fit_rate(self.h[k - 1:k + 1], e[k - 1:k + 1]))
        return out


def square_hole_problem(m: int, p: int, q: int, mu: float = 1.0, t_end: float = 1.0,
                        stabilisation: str = "agfem", quad_extra: int = 2, gamma=None,
                        levelset: Optional[LevelSetField] = None,
                        exact: Optional[ExactSolution] = None, f=None) -> tuple:
    """Manufactured-solution problem on [0,2]x[0,1] with a moving square hole."""
    h = 2.0 ** (-m)
    mesh = build_mesh([(0.0, 2.0), (0.0, 1.0)], (int(round(2 / h)), int(round(1 / h))))
    slabbing = TimeSlabbing.uniform(t_end, int(round(t_end / h)))
    if exact is None:
        exact, f = manufactured_solution(mu, t_end)
    data = ProblemData(mu=mu, f=f, g_D=exact.u, gamma=gamma)
    spec = ProblemSpec(mesh, levelset or lsm.moving_square_complement(), slabbing, p, q, data,
                       u0=lambda x, t: exact.u(x, t), stabilisation=stabilisation,
                       quad_extra=quad_extra)
    return spec, exact


def convergence_study(levels, p: int, q: int, c_mu: float = 1.0, progress: Optional[Callable] = None,
                      **kw) -> ConvergenceTable:
    """Errors on ``h = tau = 2^-m`` for each ``m`` in ``levels``."""
    hs, dg, l2 = [], [], []
    for m in levels:
        spec, exact = square_hole_problem(m, p, q, **kw)
        res = run(spec)
        err = error_norms(res, exact, c_mu)
        hs.append(2.0 ** (-m))
        dg.append(err["accumulated_dg"])
        l2.append(err["l2_final"])
        if progress is not None:
            progress(m, err)
    exact_flag = max(dg) < EXACT_LEVEL
    return ConvergenceTable(hs, dg, l2, float("nan") if exact_flag else fit_rate(hs, dg),
                            float("nan") if exact_flag else fit_rate(hs, l2), exact_flag)


@dataclass
class ConditionRow:
    shift: float
    method: str
    kappa_M: float
    kappa_A: float
    estimate: bool
    n_dofs: int


def condition_at(mesh: CartesianMesh, ls: LevelSetField, slab, p: int, q: int, method: str,
                 mu: float = 1.0, gamma=None, n_time_samples: Optional[int] = None,
                 cap: int = 20000) -> ConditionRow:
    cls = classify_slab(mesh, ls, slab, n_time_samples or default_time_samples(q))
    agg = aggregate_slab(mesh, cls)
    space = build_space(mesh, cls, agg, p, q, aggregate=(method == "agfem"))
    geom = SlabGeometry(mesh, ls, cls)
    data = ProblemData(mu=mu, gamma=gamma)
    kM = condition_number_1(assemble_mass(space, geom), cap)
    kA = condition_number_1(assemble_stiffness(space, geom, data), cap)
    return ConditionRow(float("nan"), method, kM.value, kA.value, kM.estimate or kA.estimate,
                        space.n_free_st)


def condition_sweep(shifts, h: float = 2.0 ** -5, tau: float = 1e-3, p: int = 1, q: int = 1,
                    methods=("agfem", "standard"), mu: float = 1.0, gamma=None,
                    progress: Optional[Callable] = None) -> List[ConditionRow]:
    """kappa_1 of mass and stiffness for the disk hole displaced by each shift."""
    mesh = build_mesh([(0.0, 2.0), (0.0, 1.0)], (int(round(2 / h)), int(round(1 / h))))
    rows = []
    for ell in shifts:
        ls = lsm.moving_disk_complement(shift=float(ell))
        for method in methods:
            row = condition_at(mesh, ls, (0.0, tau), p, q, method, mu, gamma)
            row.shift = float(ell)
            rows.append(row)
            if progress is not None:
                progress(row)
    return rows


def condition_scaling(levels, p: int = 1, q: int = 1, mu: float = 1.0, method: str = "agfem",
                      gamma=None, progress: Optional[Callable] = None) -> Dict[str, object]:
    """kappa_1 of the first-slab matrices on the disk geometry with tau = h."""
    hs, kM, kA, est = [], [], [], []
    for m in levels:
        h = 2.0 ** (-m)
        mesh = build_mesh([(0.0, 2.0), (0.0, 1.0)], (int(round(2 / h)), int(round(1 / h))))
        row = condition_at(mesh, lsm.moving_disk_complement(), (0.0, h), p, q, method, mu, gamma)
        hs.append(h)
        kM.append(row.kappa_M)
        kA.append(row.kappa_A)
        est.append(row.estimate)
        if progress is not None:
            progress(m, row)
    return {"h": hs, "kappa_M": kM, "kappa_A": kA, "estimate": est,
            "slope_M": fit_rate(hs, kM), "slope_A": fit_rate(hs, kA)}


# ---------------------------------------------------------------------------
# two-disk topology change
# ---------------------------------------------------------------------------

def two_disk_velocity(t_end: float = 1.5):
    """Advection field following the disks: towards y=0 first, then apart."""
    def w(x, t):
        s = np.sign(x[:, 1])
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(x),))
        vy = np.where(t <= 0.5 * t_end, -s, s)
        return np.stack([np.zeros(len(x)), vy], axis=1)
    return w


def two_disk_levelset(t_end: float = 1.5, radius: float = 0.5, offset: float = 0.75):
    """Disks approaching along y until ``T/2``, then separating again."""
    half = 0.5 * t_end

    def centre(t):
        t = np.asarray(t, dtype=float)
        return offset - np.where(t <= half, t, 2 * half - t)

    def value(x, t):
        c = centre(t)
        d1 = np.hypot(x[:, 0], x[:, 1] + c) - radius
        d2 = np.hypot(x[:, 0], x[:, 1] - c) - radius
        return np.minimum(d1, d2)

    def dvalue(x, t):
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(x),))
        c = centre(t)
        dc = np.where(t <= half, -1.0, 1.0)
        r1 = np.hypot(x[:, 0], x[:, 1] + c)
        r2 = np.hypot(x[:, 0], x[:, 1] - c)
        g1 = (x[:, 1] + c) / np.where(r1 > 0, r1, 1) * dc
        g2 = -(x[:, 1] - c) / np.where(r2 > 0, r2, 1) * dc
        return np.where(r1 - radius <= r2 - radius, g1, g2)

    return lsm.FunctionLevelSet(value, dvalue)


def two_disk_problem(nx: int = 60, ny: int = 121, n_slabs: int = 60, mu: float = 0.1,
                     t_end: float = 1.5, p: int = 1, q: int = 1, duplicate: bool = False,
                     stabilisation: str = "agfem") -> ProblemSpec:
    mesh = build_mesh([(-0.6, 0.6), (-1.35, 1.35)], (nx, ny))
    data = ProblemData(mu=mu, w=two_disk_velocity(t_end), interface_bc="neumann", box_bc="neumann")
    return ProblemSpec(mesh, two_disk_levelset(t_end), TimeSlabbing.uniform(t_end, n_slabs), p, q,
                       data, u0=lambda x, t: np.sign(x[:, 1]), stabilisation=stabilisation,
                       duplicate=duplicate)


def domain_integral(space: AgFESpace, geom: SlabGeometry, fun: SpaceFunction, t: float,
                    order: Optional[int] = None) -> float:
    order = 2 * space.p if order is None else order
    qd = geom.volume(t, order, space.cls.active_cells)
    return float(np.sum(qd.weights * fun.at(qd.cell, qd.xref, qd.simplex)))


def domain_measure(geom: SlabGeometry, t: float) -> float:
    return geom.volume(t, 1, geom.cls.active_cells).total


def disks_connected(cls: SlabClassification) -> bool:
    """True if the active cells form a single face-connected set."""
    from scipy.sparse.csgraph import connected_components
    mesh = cls.mesh
    act = cls.active_cells
    pos = -np.ones(mesh.num_cells, dtype=int)
    pos[act] = np.arange(len(act))
    rows, cols = [], []
    idx = mesh.cell_index(act).reshape(len(act), -1)
    for k in range(mesh.dim):
        j = idx.copy()
        j[:, k] += 1
        ok = j[:, k] < mesh.n_cells[k]
        nb = np.full(len(act), -1)
        nb[ok] = pos[mesh.cell_id(j[ok])]
        good = nb >= 0
        rows.append(np.nonzero(good)[0])
        cols.append(nb[good])
    G = sp.csr_matrix((np.ones(sum(len(r) for r in rows)), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(len(act), len(act)))
    ncomp, _ = connected_components(G, directed=False)
    return ncomp == 1


def first_contact_slab(spec: ProblemSpec) -> Optional[int]:
    for n in range(1, spec.slabbing.n_slabs + 1):
        cls = classify_slab(spec.mesh, spec.levelset, spec.slabbing.slab(n), spec.samples, spec.eta0)
        if disks_connected(cls):
            return n
    return None


def diameter_points(t: float, t_end: float = 1.5, radius: float = 0.5, offset: float = 0.75,
                    n: int = 5) -> np.ndarray:
    """Points on the interior of the upper disk's vertical diameter."""
    half = 0.5 * t_end
    c = offset - (t if t <= half else 2 * half - t)
    ys = c + radius * np.linspace(-0.8, 0.8, n)
    return np.stack([np.zeros(n), ys], axis=1)
