"""Legacy ASCII VTK writer for sub-triangulated fields."""
from __future__ import annotations

import numpy as np

_CELL_TYPE = {1: 1, 2: 3, 3: 5, 4: 10}  # vertex, line, triangle, tetra by node count


def _fmt(a) -> str:
    return "\n".join(" ".join(repr(float(v)) for v in row) for row in np.atleast_2d(a))


def write_unstructured(path, points, conn, point_data=None, cell_data=None, title="stagfem"):
    points = np.asarray(points, dtype=float)
    conn = np.asarray(conn, dtype=int)
    pts3 = np.zeros((len(points), 3))
    pts3[:, :points.shape[1]] = points
    nv = conn.shape[1]
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(pts3)} double"]
    if len(pts3):
        lines.append(_fmt(pts3))
    lines.append(f"CELLS {len(conn)} {len(conn) * (nv + 1)}")
    lines.extend(f"{nv} " + " ".join(map(str, c)) for c in conn)
    lines.append(f"CELL_TYPES {len(conn)}")
    lines.extend([str(_CELL_TYPE[nv])] * len(conn))
    for tag, data, n in (("POINT_DATA", point_data, len(pts3)), ("CELL_DATA", cell_data, len(conn))):
        if not data:
            continue
        lines.append(f"{tag} {n}")
        for name, vals in data.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(repr(float(v)) for v in np.asarray(vals).ravel())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_solution(path, fun, geom, t: float):
    """Write the trace ``fun`` (a ``SpaceFunction``) on the sub-triangulated Omega_h(t)."""
    from .geometry import cut_pieces

    space = fun.space
    mesh = space.mesh
    d = mesh.dim
    vv = geom.vvals(t)
    cells = space.cls.active_cells
    f = vv[mesh.cell_vertices(cells)]
    cells = cells[np.any(f < 0, axis=1)]
    pcs = cut_pieces(mesh, cells, vv)
    # uncut simplices are returned whole by the clipping, so this covers all of Omega_h(t)
    cell = cells[pcs.sub_cell]
    xloc = pcs.sub.reshape(-1, d)
    cc = np.repeat(cell, d + 1)
    ss = np.repeat(pcs.sub_simplex, d + 1)
    xref = xloc / mesh.h
    vals = fun.at(cc, xref, ss) if len(cc) else np.zeros(0)
    pts = mesh.cell_origin(cc) + xloc if len(cc) else np.zeros((0, d))
    conn = np.arange(len(pts)).reshape(-1, d + 1)
    write_unstructured(path, pts, conn, point_data={"u": vals},
                       cell_data={"cell": cell.astype(float)}, title=f"stagfem t={t!r}")
