import numpy as np
import pytest

from podgp import box_mesh, compute_jacobians, find_boundary_facets, quad_rule
from podgp.mesh import TetMesh

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


REF_TET = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


@pytest.fixture
def ref_tet():
    return TetMesh(REF_TET, [[0, 1, 2, 3]], [0])


@pytest.fixture
def cube():
    return box_mesh((1, 1, 1))


@pytest.fixture
def fe_box():
    """A 3x3x2 box with its Jacobians, boundary and degree-2 rule."""
    mesh = box_mesh((3, 3, 2), (1.0, 1.0, 0.5))
    return mesh, compute_jacobians(mesh), find_boundary_facets(mesh), quad_rule(2)


def random_tet(rng):
    """Positively oriented, reasonably shaped random tetrahedron."""
    while True:
        p = rng.normal(size=(4, 3))
        det = np.linalg.det(p[1:] - p[0])
        if abs(det) > 0.1:
            if det < 0:
                p[[1, 2]] = p[[2, 1]]
            return p
