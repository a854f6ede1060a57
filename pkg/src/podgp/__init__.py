"""POD-Galerkin reduced-order thermal simulation on tetrahedral meshes."""

from .errors import (ConfigError, DivergenceError, FactorizationError, GeometryError,
                     MeshError, NumericalError, ParseError, PodgpError, RankError,
                     ValidationError)
from .galerkin import (BoundaryCondition, ReducedSystem, Robin, assemble, calc_C, calc_G,
                       calc_P, load_system, write_system)
from .mesh import (MaterialField, TetMesh, box_mesh, compute_jacobians, find_boundary_facets,
                   load_mesh, write_mesh)
from .ode import (CoefficientTrajectory, load_trajectory, project_initial, rk4_integrate,
                  stability_limit, write_trajectory)
from .pod import PODBasis, calc_A, energy_fraction, get_modes, load_basis, write_basis
from .quadrature import quad_rule, shape_table
from .reconstruct import Region, ls_error, predict_thermal
from .snapshots import (PowerMap, SnapshotSeries, load_powermap, load_snapshots, power_at,
                        subtract_ambient, write_powermap, write_snapshots)

__version__ = "0.1.0"
