"""Slab-wise cell aggregation.

Every well-posed cell roots its own aggregate. Ill-posed active cells are
attached generation by generation to a face neighbour that is already
touched; among several candidates the one whose root has the lowest cell id
wins, which makes the map deterministic.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .geometry import CellStatus, SlabClassification, n_components, vertex_values
from .levelset import LevelSetField
from .mesh import CartesianMesh


class AggregationError(RuntimeError):
    pass


@dataclass
class CellCopy:
    """One connected piece of a duplicated cut cell."""
    cell: int
    simplex: int
    root: int
    generation: int


@dataclass
class AggregateMap:
    mesh: CartesianMesh
    root_of: np.ndarray      # per cell, -1 for exterior cells
    generation: np.ndarray   # per cell, -1 for exterior cells
    copies: Dict[int, Tuple[CellCopy, ...]] = field(default_factory=dict)

    @property
    def active_cells(self) -> np.ndarray:
        return np.nonzero(self.root_of >= 0)[0]

    @property
    def roots(self) -> np.ndarray:
        return np.unique(self.root_of[self.root_of >= 0])

    @property
    def aggregates(self) -> Dict[int, List[int]]:
        out: Dict[int, List[int]] = {}
        for c in self.active_cells:
            out.setdefault(int(self.root_of[c]), []).append(int(c))
        return out

    @property
    def max_generation(self) -> int:
        return int(self.generation.max())

    def is_identity(self) -> bool:
        act = self.active_cells
        return bool(np.all(self.root_of[act] == act)) and not self.copies


def _neighbor_table(mesh: CartesianMesh) -> np.ndarray:
    idx = mesh.cell_index(np.arange(mesh.num_cells)).reshape(mesh.num_cells, -1)
    cols = []
    for k in range(mesh.dim):
        for step in (-1, 1):
            j = idx.copy()
            j[:, k] += step
            ok = (j[:, k] >= 0) & (j[:, k] < mesh.n_cells[k])
            nb = np.full(mesh.num_cells, -1)
            nb[ok] = mesh.cell_id(j[ok])
            cols.append(nb)
    return np.stack(cols, axis=1)


def aggregate_slab(mesh: CartesianMesh, cls: SlabClassification) -> AggregateMap:
    active = cls.active
    well = cls.well_posed
    if not well.any():
        raise AggregationError("classification has no well-posed cell")
    nbr = _neighbor_table(mesh)
    root = np.full(mesh.num_cells, -1)
    gen = np.full(mesh.num_cells, -1)
    ids = np.arange(mesh.num_cells)
    root[well] = ids[well]
    gen[well] = 0
    pending = active & ~well
    big = np.iinfo(np.int64).max
    g = 0
    while pending.any():
        g += 1
        touched = gen >= 0
        nb_root = np.where(nbr >= 0, root[np.maximum(nbr, 0)], -1)
        nb_ok = (nbr >= 0) & touched[np.maximum(nbr, 0)]
        cand = np.where(nb_ok, nb_root, big).min(axis=1)
        new = pending & (cand < big)
        if not new.any():
            bad = int(np.nonzero(pending)[0][0])
            raise AggregationError(f"ill-posed cell {bad} is not connected to any well-posed cell")
        root[new] = cand[new]
        gen[new] = g
        pending &= ~new
    return AggregateMap(mesh, root, gen)


# faces touched by each Kuhn triangle: (axis, side)
_TRIANGLE_FACES = {0: ((1, 0), (0, 1)), 1: ((0, 0), (1, 1))}


def duplicate_disconnected(cls: SlabClassification, agg: AggregateMap, ls: LevelSetField,
                           slab=None) -> AggregateMap:
    """Split cut cells whose inside part is disconnected at every sample time.

    Each piece (one per Kuhn triangle) is rooted through the face neighbours
    its triangle touches. Maps without such cells are returned unchanged.
    """
    mesh = cls.mesh
    if mesh.dim != 2:
        return agg
    times = cls.sample_times
    cut = cls.cut_cells[~cls.well_posed[cls.cut_cells]]
    if not len(cut):
        return agg
    vvs = [vertex_values(mesh, ls, t) for t in times]
    split = np.ones(len(cut), dtype=bool)
    for vv in vvs:
        split &= n_components(mesh, cut, vv) == 2
    if not split.any():
        return agg
    copies = {}
    for c in cut[split]:
        pieces = []
        for s in (0, 1):
            best = None
            for axis, side in _TRIANGLE_FACES[s]:
                nb = mesh.face_neighbor(int(c), axis, side)
                if nb is None or agg.root_of[nb] < 0:
                    continue
                key = (int(agg.generation[nb]), int(agg.root_of[nb]))
                if best is None or key < best:
                    best = key
            if best is None:
                best = (int(agg.generation[c]) - 1, int(agg.root_of[c]))
            pieces.append(CellCopy(int(c), s, best[1], best[0] + 1))
        copies[int(c)] = tuple(pieces)
    return AggregateMap(mesh, agg.root_of.copy(), agg.generation.copy(), copies)


def validate(agg: AggregateMap, cls: SlabClassification) -> None:
    """Raise ``AssertionError`` if the aggregate invariants are violated."""
    mesh = agg.mesh
    act = cls.active
    assert np.array_equal(agg.root_of >= 0, act)
    well = cls.well_posed
    ids = np.arange(mesh.num_cells)
    assert np.all(agg.root_of[well] == ids[well])
    assert np.all(agg.generation[well] == 0)
    assert np.all(well[agg.root_of[act]])
    for c in np.nonzero(act & ~well)[0]:
        g = agg.generation[c]
        assert g >= 1
        ok = [nb for nb in mesh.cell_neighbors(c)
              if agg.root_of[nb] == agg.root_of[c] and 0 <= agg.generation[nb] < g]
        assert ok, f"cell {c} not linked to its root"


def write_csv(path, agg: AggregateMap, cls: SlabClassification) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "status", "eta", "root", "generation"])
        for c in range(agg.mesh.num_cells):
            eta = cls.eta[c]
            w.writerow([c, CellStatus(cls.status[c]).name.lower(),
                        "" if np.isnan(eta) else repr(float(eta)),
                        int(agg.root_of[c]), int(agg.generation[c])])
