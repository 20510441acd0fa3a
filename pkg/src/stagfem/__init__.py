"""Space-time aggregated unfitted finite elements for parabolic problems on moving domains."""
from .mesh import CartesianMesh, TimeSlabbing, build_mesh
from .levelset import (LevelSetField, half_plane, moving_disk_complement, moving_square_complement,
                       two_disks)
from .geometry import CellStatus, SlabClassification, SlabGeometry, classify_slab
from .aggregation import AggregateMap, aggregate_slab, duplicate_disconnected
from .spaces import AgFESpace, SlabFunction, build_space, interpolate, restrict_at_time
from .assembly import ProblemData, SlabSystem, assemble_mass, assemble_slab, assemble_stiffness, ghost_penalty
from .solver import condition_number_1, solve_slab
from .driver import ProblemSpec, run, error_norms, project_initial

__version__ = "0.1.0"
