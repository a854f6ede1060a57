import numpy as np
import pytest

from podgp import (BoundaryCondition, MaterialField, PowerMap, ReducedSystem, Robin,
                   SnapshotSeries, ValidationError, assemble, box_mesh, calc_A, calc_C,
                   calc_G, calc_P, compute_jacobians, find_boundary_facets, get_modes,
                   load_system, quad_rule, write_system)
from podgp.dns import dns_reference_matrices
from podgp.galerkin import boundary_load, source_vectors
from podgp.mesh import SURFACE_TAGS
from podgp.pod import PODBasis


@pytest.fixture
def setup(fe_box):
    mesh, cache, bfacets, rule = fe_box
    rng = np.random.default_rng(3)
    s = SnapshotSeries(np.arange(6.0), rng.normal(size=(6, mesh.n_dof)), 0.0)
    basis = get_modes(calc_A(s, mesh, cache, rule), s, 5, mesh, cache, rule)
    # Two materials so that per-cell coefficients matter.
    tags = (mesh.cell_centroids()[:, 2] > 0.25).astype(int)
    mesh = type(mesh)(mesh.vertices, mesh.cells, tags)
    mat = MaterialField({0: (150.0, 2330.0, 700.0), 1: (1.5, 2200.0, 750.0)})
    return mesh, cache, bfacets, rule, basis, mat


BC = BoundaryCondition.from_names({"bottom": Robin(2e4, 310.0), "top": Robin(10.0, 300.0)})


def test_c_matches_closed_form_mass(setup):
    mesh, cache, bfacets, rule, basis, mat = setup
    ref = dns_reference_matrices(mesh, mat, BC, bfacets)
    c = calc_C(basis, mesh, cache, rule, mat)
    oracle = basis.u @ (ref.mass @ basis.u.T)
    assert np.allclose(c, oracle, rtol=1e-11, atol=1e-11 * np.abs(oracle).max())
    assert np.array_equal(c, c.T)
    assert np.linalg.eigvalsh(c).min() > 0


@pytest.mark.parametrize("bc", [BoundaryCondition.adiabatic(), BC])
def test_g_matches_closed_form_stiffness(setup, bc):
    mesh, cache, bfacets, rule, basis, mat = setup
    ref = dns_reference_matrices(mesh, mat, bc, bfacets)
    g = calc_G(basis, mesh, cache, rule, mat, bfacets, bc)
    oracle = basis.u @ ((ref.stiffness + ref.surface) @ basis.u.T)
    assert np.allclose(g, oracle, rtol=1e-10, atol=1e-10 * np.abs(oracle).max())
    assert np.array_equal(g, g.T)


def test_g_definiteness_per_bc(fe_box):
    mesh, cache, bfacets, rule = fe_box
    # A basis containing the constant field exposes the adiabatic null space.
    x = mesh.vertices
    s = SnapshotSeries(np.arange(3.0), np.stack([np.ones(mesh.n_dof), x[:, 0], x[:, 2] ** 2]), 0.0)
    basis = get_modes(calc_A(s, mesh, cache, rule), s, 3, mesh, cache, rule)
    mat = MaterialField.uniform(1.0, 1.0, 1.0)
    adiabatic = np.linalg.eigvalsh(calc_G(basis, mesh, cache, rule, mat, bfacets,
                                          BoundaryCondition.adiabatic()))
    robin = np.linalg.eigvalsh(calc_G(basis, mesh, cache, rule, mat, bfacets, BC))
    assert abs(adiabatic.min()) < 1e-10 * adiabatic.max()
    assert robin.min() > 1e-6 * robin.max()


def test_source_vector_cell_aligned_box(setup):
    mesh, cache, bfacets, rule, basis, mat = setup
    box = np.array([0.0, 0.0, 0.25, 2 / 3, 1.0, 0.5])
    pm = PowerMap([box], [[1.0, 1.0]], [0.0, 1.0])
    src = source_vectors(basis, mesh, cache, rule, pm)[0]
    # Oracle: the P1 load of a constant over a cell is V/4 per vertex.
    cen = mesh.cell_centroids()
    sel = np.all((cen >= box[:3]) & (cen <= box[3:]), axis=1)
    load = np.zeros(mesh.n_dof)
    np.add.at(load, mesh.cells[sel].ravel(), np.repeat(cache.volumes[sel] / 4.0, 4))
    assert np.allclose(src, basis.u @ load, rtol=1e-12, atol=1e-14)


def test_boundary_load_matches_closed_form(setup):
    mesh, cache, bfacets, rule, basis, mat = setup
    ref = dns_reference_matrices(mesh, mat, BC, bfacets)
    got = boundary_load(basis, mesh, bfacets, BC, 300.0)
    oracle = basis.u @ (ref.surface_h_tref - 300.0 * ref.surface_h)
    assert np.allclose(got, oracle, rtol=1e-11, atol=1e-12 * np.abs(oracle).max())
    homogeneous = BoundaryCondition.from_names({"bottom": Robin(2e4, 300.0)})
    assert np.all(boundary_load(basis, mesh, bfacets, homogeneous, 300.0) == 0)


def test_calc_p_is_linear_in_traces(setup):
    mesh, cache, bfacets, rule, basis, mat = setup
    boxes = [[0, 0, 0, 0.5, 0.5, 0.5], [0.3, 0.3, 0.2, 1, 1, 0.5]]
    times = np.linspace(0, 1, 5)
    traces = np.array([[0, 1, 2, 3, 4.0], [5, 4, 3, 2, 1.0]])
    pm = PowerMap(boxes, traces, times)
    p, pt = calc_P(basis, mesh, cache, rule, pm, BC, bfacets, 300.0)
    assert np.array_equal(pt, times)
    src = source_vectors(basis, mesh, cache, rule, pm)
    bl = boundary_load(basis, mesh, bfacets, BC, 300.0)
    assert np.allclose(p, traces.T @ src + bl, rtol=1e-13, atol=1e-13 * np.abs(p).max())


def test_assemble_and_roundtrip(tmp_path, setup):
    mesh, cache, bfacets, rule, basis, mat = setup
    pm = PowerMap([[0, 0, 0, 1, 1, 0.5]], [[1.0, 2.0]], [0.0, 1.0])
    sys = assemble(basis, mesh, cache, rule, mat, bfacets, BC, pm, 300.0)
    write_system(sys, tmp_path / "s.podr")
    back = load_system(tmp_path / "s.podr")
    for name in ("c", "g", "p", "p_times"):
        assert np.array_equal(getattr(back, name), getattr(sys, name))
    assert back.bc.robin == sys.bc.robin


def test_truncate_matches_smaller_basis(setup):
    mesh, cache, bfacets, rule, basis, mat = setup
    pm = PowerMap([[0, 0, 0, 1, 1, 0.5]], [[1.0, 2.0]], [0.0, 1.0])
    full = assemble(basis, mesh, cache, rule, mat, bfacets, BC, pm, 300.0)
    small = assemble(basis.truncate(3), mesh, cache, rule, mat, bfacets, BC, pm, 300.0)
    t = full.truncate(3)
    assert np.allclose(t.c, small.c) and np.allclose(t.g, small.g) and np.allclose(t.p, small.p)
    with pytest.raises(ValidationError):
        full.truncate(0)


def test_unknown_boundary_kind_rejected(tmp_path):
    sys = ReducedSystem(np.eye(1), np.eye(1), np.zeros((2, 1)), np.array([0.0, 1.0]),
                        BoundaryCondition({5: Robin(1.0, 0.0)}))
    write_system(sys, tmp_path / "s.podr")
    raw = bytearray((tmp_path / "s.podr").read_bytes())
    kind_at = len(raw) - 8 - 8 - 4
    raw[kind_at] = 7
    (tmp_path / "bad.podr").write_bytes(bytes(raw))
    with pytest.raises(ValidationError, match="unknown boundary kind"):
        load_system(tmp_path / "bad.podr")


def test_boundary_condition_names():
    bc = BoundaryCondition.from_names({"xmin": None, "sides": Robin(5.0, 1.0),
                                       "ymax": Robin(7.0, 1.0)})
    assert bc.robin[SURFACE_TAGS["xmax"]].h == 5.0
    assert bc.robin[SURFACE_TAGS["ymax"]].h == 7.0
    assert SURFACE_TAGS["xmin"] not in bc.robin
    assert bc.has_convection
    assert not BoundaryCondition.adiabatic().has_convection
    with pytest.raises(ValidationError, match="unknown surface"):
        BoundaryCondition.from_names({"north": None})
    with pytest.raises(ValidationError, match="h must be >= 0"):
        Robin(-1.0, 0.0)


def test_facet_coefficients_follow_tags():
    mesh = box_mesh((2, 2, 2))
    facets = find_boundary_facets(mesh)
    h, h_tref = BC.facet_coefficients(facets)
    bottom = facets.surface_tag == SURFACE_TAGS["bottom"]
    assert np.all(h[bottom] == 2e4) and np.all(h_tref[bottom] == 2e4 * 310.0)
    side = facets.surface_tag == SURFACE_TAGS["xmin"]
    assert np.all(h[side] == 0)
    assert compute_jacobians(mesh).volumes.sum() == pytest.approx(1.0)
    assert quad_rule(1).weights.sum() == pytest.approx(1 / 6)


def _dense_box_integral(basis, mesh, box, n=12):
    """Integral of each mode over a box with a collapsed-coordinate Gauss rule per cell."""
    g, w = np.polynomial.legendre.leggauss(n)
    g, w = 0.5 * (g + 1), 0.5 * w
    u, v, s = (a.ravel() for a in np.meshgrid(g, g, g, indexing="ij"))
    wt = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
    x, y, z = u, v * (1 - u), s * (1 - u) * (1 - v)
    wt = wt * (1 - u) ** 2 * (1 - v)
    bary = np.column_stack([1 - x - y - z, x, y, z])
    out = np.zeros(basis.d)
    for cell in mesh.cells:
        p = mesh.vertices[cell]
        det = abs(np.linalg.det(p[1:] - p[0]))
        pts = bary @ p
        inside = np.all((pts >= box[:3]) & (pts <= box[3:]), axis=1)
        out += basis.u[:, cell] @ (bary.T @ (wt * inside)) * det
    return out


def test_source_vector_matches_dense_quadrature(setup):
    mesh, cache, bfacets, rule, basis, mat = setup
    box = np.array([1 / 3, 0.0, 0.0, 1.0, 2 / 3, 0.25])
    pm = PowerMap([box], [[1.0, 1.0]], [0.0, 1.0])
    got = source_vectors(basis, mesh, cache, rule, pm)[0]
    assert np.allclose(got, _dense_box_integral(basis, mesh, box), rtol=1e-11, atol=1e-13)


def test_c_is_identity_for_unit_capacity_and_linear(fe_box):
    mesh, cache, bfacets, rule = fe_box
    rng = np.random.default_rng(4)
    s = SnapshotSeries(np.arange(4.0), rng.normal(size=(4, mesh.n_dof)), 0.0)
    basis = get_modes(calc_A(s, mesh, cache, rule), s, 4, mesh, cache, rule)
    c1 = calc_C(basis, mesh, cache, rule, MaterialField.uniform(5.0, 1.0, 1.0))
    assert np.allclose(c1, np.eye(basis.d), atol=1e-8)
    c2 = calc_C(basis, mesh, cache, rule, MaterialField.uniform(5.0, 2.0, 1.0))
    assert np.allclose(c2, 2.0 * c1, rtol=1e-14)


def test_g_constant_mode_and_kappa_scaling(fe_box):
    mesh, cache, bfacets, rule = fe_box
    x = mesh.vertices
    s = SnapshotSeries([0.0, 1.0], np.stack([np.ones(mesh.n_dof), x[:, 1]]), 0.0)
    basis = get_modes(calc_A(s, mesh, cache, rule), s, 2, mesh, cache, rule)
    const = np.full((1, mesh.n_dof), basis.u[0, 0])
    cb = PODBasis(np.vstack([const, basis.u[1:]]), basis.eigvals, basis.total_energy)
    adi = BoundaryCondition.adiabatic()
    g1 = calc_G(cb, mesh, cache, rule, MaterialField.uniform(1.0, 1, 1), bfacets, adi)
    assert np.allclose(g1[0], 0.0, atol=1e-14) and np.allclose(g1[:, 0], 0.0, atol=1e-14)
    g2 = calc_G(cb, mesh, cache, rule, MaterialField.uniform(2.0, 1, 1), bfacets, adi)
    assert np.allclose(g2, 2.0 * g1, rtol=1e-14)


def test_p_zero_and_uniform_density(fe_box):
    mesh, cache, bfacets, rule = fe_box
    c = 0.7
    basis = PODBasis(np.full((1, mesh.n_dof), c), np.ones(1), 1.0)
    homogeneous = BoundaryCondition.from_names({"bottom": Robin(5.0, 300.0)})
    zero = PowerMap([[0, 0, 0, 1, 1, 0.5]], [[0.0, 0.0]], [0.0, 1.0])
    p, _ = calc_P(basis, mesh, cache, rule, zero, homogeneous, bfacets, 300.0)
    assert np.all(p == 0)
    q = 3.0
    full = PowerMap([[0, 0, 0, 1, 1, 0.5]], [[q, q]], [0.0, 1.0])
    p, _ = calc_P(basis, mesh, cache, rule, full, homogeneous, bfacets, 300.0)
    assert np.allclose(p, q * c * 0.5, rtol=1e-13)
