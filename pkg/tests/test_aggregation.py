from collections import deque

import numpy as np
import pytest

from stagfem import levelset as lsm
from stagfem.aggregation import (AggregationError, aggregate_slab, duplicate_disconnected, validate,
                                 write_csv)
from stagfem.geometry import classify_slab
from stagfem.mesh import build_mesh
from stagfem.spaces import build_space


def hop_distances(mesh, cls):
    """Multi-source BFS over active cells from the well-posed ones."""
    dist = np.full(mesh.num_cells, -1)
    todo = deque()
    for c in cls.well_posed_cells:
        dist[c] = 0
        todo.append(c)
    while todo:
        c = todo.popleft()
        for nb in mesh.cell_neighbors(c):
            if cls.active[nb] and dist[nb] < 0:
                dist[nb] = dist[c] + 1
                todo.append(nb)
    return dist


def test_all_well_posed_is_identity():
    mesh = build_mesh([(0, 1), (0, 1)], (3, 3))
    cls = classify_slab(mesh, lsm.half_plane(offset=5.0), (0, 1))
    agg = aggregate_slab(mesh, cls)
    assert agg.is_identity()
    assert all(len(v) == 1 for v in agg.aggregates.values())


def test_one_dimensional_chain():
    mesh = build_mesh([(0, 3)], (3,))
    ls = lsm.FunctionLevelSet(lambda x, t: x[:, 0] - 1.2 - 1.6 * t)
    cls = classify_slab(mesh, ls, (0, 1))
    assert cls.well_posed.tolist() == [True, False, False]
    agg = aggregate_slab(mesh, cls)
    assert agg.root_of.tolist() == [0, 0, 0]
    assert agg.generation.tolist() == [0, 1, 2]


def test_unreachable_cell_is_named():
    mesh = build_mesh([(0, 5)], (5,))
    ls = lsm.Union(lsm.FunctionLevelSet(lambda x, t: x[:, 0] - 1.5),
                   lsm.FunctionLevelSet(lambda x, t: np.abs(x[:, 0] - 4.0) - 0.1))
    cls = classify_slab(mesh, ls, (0, 1))
    with pytest.raises(AggregationError, match="cell 3"):
        aggregate_slab(mesh, cls)


@pytest.mark.parametrize("tau", [1e-3, 2.0 ** -5, 0.25])
def test_disk_hole_invariants(tau):
    mesh = build_mesh([(0, 2), (0, 1)], (64, 32))
    cls = classify_slab(mesh, lsm.moving_disk_complement(), (0.0, tau))
    agg = aggregate_slab(mesh, cls)
    validate(agg, cls)
    act = cls.active_cells
    assert np.array_equal(agg.generation[act], hop_distances(mesh, cls)[act])
    if tau <= 2.0 ** -5:
        assert agg.max_generation <= 3
    # one well-posed cell per aggregate, diameter bounded by generations
    for root, members in agg.aggregates.items():
        assert cls.well_posed[members].sum() == 1 and cls.well_posed[root]
        c = mesh.cell_center(np.asarray(members))
        diam = np.max(np.linalg.norm(c[:, None] - c[None], axis=2)) + np.linalg.norm(mesh.h)
        assert diam <= (agg.max_generation + 1) * mesh.hmax * np.sqrt(2) + 1e-12


def test_tie_break_lowest_root():
    mesh = build_mesh([(0, 3), (0, 3)], (3, 3))
    # hole around vertex (2, 2): cells 4, 5, 7, 8 are cut
    ls = lsm.Ball((2.0, 2.0), 0.3)
    cls = classify_slab(mesh, lsm.Negated(ls), (0, 1))
    assert cls.cut_cells.tolist() == [4, 5, 7, 8]
    agg = aggregate_slab(mesh, cls)
    assert agg.root_of[[4, 5, 7, 8]].tolist() == [1, 2, 6, 2]
    assert agg.generation[[4, 5, 7, 8]].tolist() == [1, 1, 1, 2]


def test_deterministic_and_slab_local(disk_slab):
    mesh, ls = disk_slab.mesh, disk_slab.ls
    a = aggregate_slab(mesh, classify_slab(mesh, ls, (0.0, 0.125)))
    b = aggregate_slab(mesh, classify_slab(mesh, ls, (0.0, 0.125)))
    assert np.array_equal(a.root_of, b.root_of) and np.array_equal(a.generation, b.generation)
    # a level set that differs only after the slab leaves the map untouched
    late = lsm.FunctionLevelSet(lambda x, t: ls.value(x, t) + np.maximum(t - 0.2, 0.0) * 7.0)
    c = aggregate_slab(mesh, classify_slab(mesh, late, (0.0, 0.125)))
    assert np.array_equal(a.root_of, c.root_of)


def _corner_disks(speed=0.0):
    def value(x, t):
        s = speed * t
        a = np.hypot(x[:, 0] - 1.6 + s, x[:, 1] + 0.6 - s) - 1.0
        b = np.hypot(x[:, 0] + 0.6 - s, x[:, 1] - 1.6 + s) - 1.0
        return np.minimum(a, b)
    return lsm.FunctionLevelSet(value)


def test_duplicate_splits_two_component_cell():
    mesh = build_mesh([(-1, 2), (-1, 2)], (3, 3))
    ls = _corner_disks(0.02)
    cls = classify_slab(mesh, ls, (0, 1))
    agg = aggregate_slab(mesh, cls)
    dup = duplicate_disconnected(cls, agg, ls, (0, 1))
    assert list(dup.copies) == [4]
    lo, up = dup.copies[4]
    assert lo.root != up.root
    assert {lo.root, up.root} == {2, 6}
    space = build_space(mesh, cls, dup, 1, 1)
    assert np.all(space.split_elem[4] >= 0) and space.cell_elem[4] == -2


def test_duplicate_leaves_other_maps_unchanged(disk_slab):
    agg = duplicate_disconnected(disk_slab.cls, disk_slab.agg, disk_slab.ls)
    assert not agg.copies
    # disks a full cell apart
    mesh = build_mesh([(-0.6, 0.6), (-1.35, 1.35)], (12, 27))
    ls = lsm.two_disks(0.5, 0.75)
    cls = classify_slab(mesh, ls, (0, 0.01))
    agg = aggregate_slab(mesh, cls)
    assert not duplicate_disconnected(cls, agg, ls).copies


def test_write_csv(tmp_path, disk_slab):
    path = tmp_path / "agg.csv"
    write_csv(path, disk_slab.agg, disk_slab.cls)
    lines = path.read_text().splitlines()
    assert lines[0] == "cell,status,eta,root,generation"
    assert len(lines) == disk_slab.mesh.num_cells + 1
