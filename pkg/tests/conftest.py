import numpy as np
import pytest

from stagfem import levelset as lsm
from stagfem.aggregation import aggregate_slab
from stagfem.geometry import SlabGeometry, classify_slab
from stagfem.mesh import build_mesh
from stagfem.spaces import build_space

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class Slab:
    """Bundle of the per-slab objects used throughout the tests."""

    def __init__(self, mesh, ls, slab, p=1, q=1, aggregate=True, n_samples=5):
        self.mesh, self.ls, self.slab_times = mesh, ls, slab
        self.cls = classify_slab(mesh, ls, slab, n_samples)
        self.agg = aggregate_slab(mesh, self.cls)
        self.space = build_space(mesh, self.cls, self.agg, p, q, aggregate=aggregate)
        self.geom = SlabGeometry(mesh, ls, self.cls)


def disk_mesh(n=8):
    return build_mesh([(0.0, 2.0), (0.0, 1.0)], (2 * n, n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def disk_slab():
    # coarse moving-disk slab with aggregated cut cells
    return Slab(disk_mesh(8), lsm.moving_disk_complement(), (0.0, 0.125))


@pytest.fixture(scope="session")
def disk_slab_q2():
    return Slab(disk_mesh(8), lsm.moving_disk_complement(), (0.0, 0.125), p=2, q=2)


@pytest.fixture(scope="session")
def square_slab():
    return Slab(disk_mesh(8), lsm.moving_square_complement(), (0.25, 0.375))
