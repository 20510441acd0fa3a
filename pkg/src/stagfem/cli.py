"""Command-line front end.

    stagfem {solve,convergence,cond-sweep,cond-scaling,topology} --config run.json [--out DIR] [--threads N]

Exit codes: 0 success, 2 malformed configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

SUBCOMMANDS = ("solve", "convergence", "cond-sweep", "cond-scaling", "topology")
SCHEMA_VERSION = 1
STABILISATIONS = ("agfem", "ghost-weak", "ghost-bulk", "ghost-face", "none")
GEOMETRIES = ("moving-disk", "moving-square", "two-disks", "half-plane")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS = 0, 2, 3


class ConfigError(ValueError):
    pass


def fmt(v) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_csv(path: Path, header: List[str], rows: List[List[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    raw: Dict[str, Any]

    def get(self, key, default=None, kind=None):
        v = self.raw.get(key, default)
        if kind is not None and v is not None:
            try:
                v = kind(v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"field {key!r}: {exc}") from exc
        return v

    @property
    def p(self) -> int:
        return self._order("p")

    @property
    def q(self) -> int:
        return self._order("q")

    def _order(self, key):
        v = self.get(key, 1, int)
        if v not in (1, 2):
            raise ConfigError(f"{key} must be 1 or 2")
        return v

    @property
    def mu(self) -> float:
        v = self.get("mu", 1.0, float)
        if not v > 0:
            raise ConfigError("mu must be positive")
        return v

    @property
    def gamma(self) -> Optional[float]:
        v = self.get("gamma", None, float)
        if v is not None and not v > 0:
            raise ConfigError("gamma must be positive")
        return v

    @property
    def stabilisation(self) -> str:
        v = self.get("stabilisation", "agfem")
        if v not in STABILISATIONS:
            raise ConfigError(f"stabilisation must be one of {STABILISATIONS}")
        return v

    @property
    def eta0(self) -> float:
        v = self.get("eta0", 1.0, float)
        if not 0 < v <= 1:
            raise ConfigError("eta0 must lie in (0, 1]")
        return v

    @property
    def geometry(self) -> Dict[str, Any]:
        g = self.raw.get("geometry", {})
        if isinstance(g, str):
            g = {"name": g}
        if not isinstance(g, dict) or g.get("name") not in GEOMETRIES:
            raise ConfigError(f"geometry.name must be one of {GEOMETRIES}")
        return g

    def levels(self, default) -> List[int]:
        v = self.raw.get("levels", default)
        if not isinstance(v, list) or len(v) < 2 or not all(isinstance(m, int) and m >= 1 for m in v):
            raise ConfigError("levels must be a list of at least two positive integers")
        return v


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    return RunConfig(raw)


def make_levelset(g: Dict[str, Any], t_end: float):
    from . import levelset as lsm
    from .driver import two_disk_levelset

    name = g["name"]
    try:
        if name == "moving-disk":
            return lsm.moving_disk_complement(g.get("center0", (1.5, 0.5)), g.get("velocity", (-0.5, 0.0)),
                                              float(g.get("radius", 0.2)), float(g.get("shift", 0.0)))
        if name == "moving-square":
            return lsm.moving_square_complement(g.get("center0", (1.5, 0.5)), g.get("velocity", (0.5, 0.0)),
                                                float(g.get("half_width", 0.2)))
        if name == "two-disks":
            return two_disk_levelset(t_end, float(g.get("radius", 0.5)), float(g.get("offset", 0.75)))
        return lsm.half_plane(g.get("normal", (1.0, 0.0)), float(g.get("offset", 0.5)),
                              float(g.get("speed", 0.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"geometry parameters: {exc}") from exc


def make_mesh(cfg: RunConfig, default_bounds, default_cells):
    from .mesh import MeshError, build_mesh

    m = cfg.raw.get("mesh", {})
    if not isinstance(m, dict):
        raise ConfigError("mesh must be an object")
    bounds = m.get("bounds", default_bounds)
    cells = m.get("n_cells", default_cells)
    if "h" in m:
        h = float(m["h"])
        cells = [int(round((b[1] - b[0]) / h)) for b in bounds]
    try:
        return build_mesh(bounds, cells)
    except (MeshError, TypeError, ValueError) as exc:
        raise ConfigError(f"mesh: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(cfg: RunConfig, out: Path) -> None:
    import numpy as np

    from . import driver as D
    from .assembly import ProblemData
    from .mesh import TimeSlabbing
    from .vtk import write_solution

    t_end = cfg.get("t_end", 1.0, float)
    n_slabs = cfg.get("n_slabs", 8, int)
    if n_slabs < 1 or not t_end > 0:
        raise ConfigError("n_slabs must be >= 1 and t_end > 0")
    geo = cfg.geometry
    mesh = make_mesh(cfg, [[0.0, 2.0], [0.0, 1.0]], [16, 8])
    ls = make_levelset(geo, t_end)
    problem = cfg.get("problem", "manufactured")
    mu = cfg.mu
    exact = None
    w = cfg.raw.get("w")
    if w is not None and not (isinstance(w, list) and len(w) == mesh.dim):
        raise ConfigError("w must be a constant vector")
    wfun = None if w is None else (lambda x, t, w=np.asarray(w, float): np.broadcast_to(w, x.shape))
    bc_i = cfg.get("interface_bc", "dirichlet")
    bc_b = cfg.get("box_bc", "dirichlet")
    try:
        if problem == "manufactured":
            lx, ly = mesh.lengths
            exact, f = D.manufactured_solution(mu, t_end, lx, ly)
            data = ProblemData(mu=mu, f=f, g_D=exact.u, w=None, interface_bc="dirichlet",
                               box_bc="dirichlet", gamma=cfg.gamma)
            u0 = exact.u
        elif problem == "constant":
            c = cfg.get("value", 1.0, float)
            data = ProblemData(mu=mu, w=wfun, g_D=lambda x, t: np.full(len(x), c),
                               interface_bc=bc_i, box_bc=bc_b, gamma=cfg.gamma)
            u0 = lambda x, t: np.full(len(x), c)
        else:
            raise ConfigError("problem must be 'manufactured' or 'constant'")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    spec = D.ProblemSpec(mesh, ls, TimeSlabbing.uniform(t_end, n_slabs), cfg.p, cfg.q, data, u0,
                         stabilisation=cfg.stabilisation, eta0=cfg.eta0,
                         quad_extra=cfg.get("quad_extra", 0, int),
                         conditioning=bool(cfg.get("conditioning", False)))
    rows = []
    vtk = bool(cfg.get("vtk", False))

    def record(rec):
        t1 = rec.space.slab[1]
        tr = rec.trace(t1)
        rows.append([rec.n, rec.space.slab[0], t1, rec.n_free, rec.diagnostics["n_cut"], rec.residual,
                     D.domain_integral(rec.space, rec.geom, tr, t1),
                     rec.diagnostics.get("kappa_M", float("nan")),
                     rec.diagnostics.get("kappa_A", float("nan"))])
        if vtk:
            write_solution(out / f"solution_{rec.n:04d}.vtk", tr, rec.geom, t1)

    res = D.run(spec, callback=record)
    write_csv(out / "slabs.csv", ["slab", "t_start", "t_end", "n_free", "n_cut", "residual",
                                  "integral", "kappa_M", "kappa_A"], rows)
    if exact is not None:
        err = D.error_norms(res, exact)
        write_csv(out / "errors.csv", ["accumulated_dg", "l2_final"],
                  [[err["accumulated_dg"], err["l2_final"]]])


def cmd_convergence(cfg: RunConfig, out: Path) -> None:
    from . import driver as D

    levels = cfg.levels([3, 4, 5, 6])
    geo = cfg.geometry
    t_end = cfg.get("t_end", 1.0, float)
    ls = make_levelset(geo, t_end)
    p, q = cfg.p, cfg.q
    tab = D.convergence_study(levels, p, q, c_mu=cfg.get("c_mu", 1.0, float), mu=cfg.mu, t_end=t_end,
                              stabilisation=cfg.stabilisation, gamma=cfg.gamma, levelset=ls,
                              quad_extra=cfg.get("quad_extra", 2, int),
                              progress=lambda m, e: print(f"m={m} dg={e['accumulated_dg']:.6e} "
                                                          f"l2={e['l2_final']:.6e}", file=sys.stderr))
    dg_loc, l2_loc = tab.local_rates("dg_error"), tab.local_rates("l2_final")
    rows = [[m, h, h, e1, e2, r1, r2] for m, h, e1, e2, r1, r2 in
            zip(levels, tab.h, tab.dg_error, tab.l2_final, dg_loc, l2_loc)]
    write_csv(out / "convergence.csv", ["m", "h", "tau", "dg_error", "l2_final", "dg_rate", "l2_rate"], rows)
    write_csv(out / "convergence_summary.csv", ["p", "q", "dg_slope", "l2_slope", "exact"],
              [[p, q, tab.dg_rate, tab.l2_rate, int(tab.exact)]])


def cmd_cond_sweep(cfg: RunConfig, out: Path) -> None:
    from . import driver as D

    shifts = cfg.raw.get("shifts", {"n": 50})
    if isinstance(shifts, dict):
        n = int(shifts.get("n", 50))
        if n < 2:
            raise ConfigError("shifts.n must be >= 2")
        shifts = [k / (n - 1) for k in range(n)]
    if not isinstance(shifts, list) or not shifts:
        raise ConfigError("shifts must be a list of numbers or {'n': count}")
    methods = cfg.raw.get("methods", ["agfem", "standard"])
    if not isinstance(methods, list) or any(m not in ("agfem", "standard") for m in methods):
        raise ConfigError("methods must be a subset of ['agfem', 'standard']")
    h = cfg.get("h", 2.0 ** -5, float)
    tau = cfg.get("tau", 1e-3, float)
    rows = D.condition_sweep([float(s) for s in shifts], h, tau, cfg.p, cfg.q, tuple(methods), cfg.mu,
                             cfg.gamma)
    write_csv(out / "cond_sweep.csv", ["shift", "method", "kappa_M", "kappa_A", "estimate", "n_dofs"],
              [[r.shift, r.method, r.kappa_M, r.kappa_A, int(r.estimate), r.n_dofs] for r in rows])


def cmd_cond_scaling(cfg: RunConfig, out: Path) -> None:
    from . import driver as D

    levels = cfg.levels([3, 4, 5, 6])
    res = D.condition_scaling(levels, cfg.p, cfg.q, cfg.mu, cfg.get("method", "agfem"), cfg.gamma)
    rows = [[m, h, h, kM, kA, int(e)] for m, h, kM, kA, e in
            zip(levels, res["h"], res["kappa_M"], res["kappa_A"], res["estimate"])]
    write_csv(out / "cond_scaling.csv", ["m", "h", "tau", "kappa_M", "kappa_A", "estimate"], rows)
    write_csv(out / "cond_scaling_summary.csv", ["slope_M", "slope_A"], [[res["slope_M"], res["slope_A"]]])


def cmd_topology(cfg: RunConfig, out: Path) -> None:
    import numpy as np

    from . import driver as D
    from .vtk import write_solution

    n_cells = cfg.raw.get("mesh", {}).get("n_cells", [60, 121])
    t_end = cfg.get("t_end", 1.5, float)
    mu = cfg.mu if "mu" in cfg.raw else 0.1
    spec = D.two_disk_problem(int(n_cells[0]), int(n_cells[1]), cfg.get("n_slabs", 60, int), mu,
                              t_end, cfg.p, cfg.q, duplicate=bool(cfg.get("duplicate", False)),
                              stabilisation=cfg.stabilisation)
    contact = D.first_contact_slab(spec)
    vtk = bool(cfg.get("vtk", True))
    rows = []

    def record(rec):
        t1 = rec.space.slab[1]
        tr = rec.trace(t1)
        pts = D.diameter_points(t1, t_end)
        up = tr(pts)
        lo = tr(pts * np.array([1.0, -1.0]))
        rows.append([rec.n, t1, D.domain_integral(rec.space, rec.geom, tr, t1),
                     D.domain_measure(rec.geom, t1), rec.residual, float(up.min()), float(up.max()),
                     float(lo.min()), float(lo.max()), int(contact is not None and rec.n >= contact)])
        if vtk:
            write_solution(out / f"topology_{rec.n:04d}.vtk", tr, rec.geom, t1)

    D.run(spec, callback=record, keep=False)
    write_csv(out / "conservation.csv", ["slab", "t", "integral", "measure", "residual", "upper_min",
                                         "upper_max", "lower_min", "lower_max", "in_contact"], rows)


COMMANDS = {"solve": cmd_solve, "convergence": cmd_convergence, "cond-sweep": cmd_cond_sweep,
            "cond-scaling": cmd_cond_scaling, "topology": cmd_topology}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stagfem", description="Space-time aggregated unfitted FEM runs")
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    ap.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(max(1, args.threads))
    try:
        cfg = load_config(args.config)
        out = Path(args.out or cfg.raw.get("output_dir") or ".")
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # numerical failures of any stage
        from .driver import SlabFailure
        where = f" (slab {exc.n})" if isinstance(exc, SlabFailure) else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
