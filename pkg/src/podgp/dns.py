"""Full-order P1 finite-element heat solver used as ground truth.

Semi-discretization ``M dT/dt + (K + S) T = F(t) + R`` with exact
closed-form element matrices, stepped with implicit Euler.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FactorizationError, ValidationError
from .galerkin import BoundaryCondition
from .mesh import BoundaryFacetSet, MaterialField, TetMesh, find_boundary_facets
from .quadrature import QuadRule, quad_rule
from .snapshots import PowerMap, SnapshotSeries

MAX_DOF = 200_000


@dataclass(frozen=True, eq=False)
class ReferenceMatrices:
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    surface: sp.csr_matrix
    surface_h: np.ndarray  # integral of h * phi_j over Robin surfaces
    surface_h_tref: np.ndarray  # integral of h * t_ref * phi_j


def _scatter(cells, blocks, n):
    k = cells.shape[1]
    rows = np.repeat(cells, k, axis=1).ravel()
    cols = np.tile(cells, (1, k)).ravel()
    return sp.csr_matrix((blocks.ravel(), (rows, cols)), shape=(n, n))


def barycentric_gradients(mesh: TetMesh):
    """Volumes and P1 gradients from the inverse of ``[1 x y z]`` per cell."""
    p = mesh.vertices[mesh.cells]
    aug = np.concatenate([np.ones((mesh.n_cells, 4, 1)), p], axis=2)
    vol = np.linalg.det(aug) / 6.0
    coef = np.linalg.inv(aug)  # column j holds the coefficients of lambda_j
    return vol, np.transpose(coef[:, 1:, :], (0, 2, 1))


def dns_reference_matrices(mesh: TetMesh, mat: MaterialField, bc: BoundaryCondition,
                           bfacets: BoundaryFacetSet | None = None) -> ReferenceMatrices:
    n = mesh.n_dof
    kappa, heat_cap = mat.per_cell(mesh)
    vol, grads = barycentric_gradients(mesh)
    vol = np.abs(vol)
    ke = (kappa * vol)[:, None, None] * np.einsum("cix,cjx->cij", grads, grads)
    pattern = (np.ones((4, 4)) + np.eye(4)) / 20.0
    me = (heat_cap * vol)[:, None, None] * pattern[None]
    bfacets = bfacets if bfacets is not None else find_boundary_facets(mesh)
    h, h_tref = bc.facet_coefficients(bfacets)
    tri = (np.ones((3, 3)) + np.eye(3)) / 12.0
    se = (h * bfacets.area)[:, None, None] * tri[None]
    surface_h = np.zeros(n)
    surface_h_tref = np.zeros(n)
    np.add.at(surface_h, bfacets.vertices.ravel(), np.repeat(h * bfacets.area / 3.0, 3))
    np.add.at(surface_h_tref, bfacets.vertices.ravel(),
              np.repeat(h_tref * bfacets.area / 3.0, 3))
    return ReferenceMatrices(
        mass=_scatter(mesh.cells, me, n),
        stiffness=_scatter(mesh.cells, ke, n),
        surface=_scatter(bfacets.vertices, se, n),
        surface_h=surface_h,
        surface_h_tref=surface_h_tref,
    )


def region_loads(mesh: TetMesh, pmap: PowerMap, rule: QuadRule) -> np.ndarray:
    """``(n_regions, n_dof)`` nodal loads of each box at unit density.

    Box membership is decided at quadrature points, the same convention
    the reduced forcing uses.
    """
    pmap.check_within(mesh)
    bary = rule.barycentric  # (k, 4)
    p = mesh.vertices[mesh.cells]
    pts = np.einsum("qj,cjx->cqx", bary, p)
    vol6 = np.abs(np.linalg.det(p[:, 1:] - p[:, :1]))
    loads = np.zeros((pmap.n_regions, mesh.n_dof))
    for r in range(pmap.n_regions):
        inside = pmap.indicator(pts.reshape(-1, 3))[r].reshape(pts.shape[:2])
        contrib = vol6[:, None] * ((inside * rule.weights[None, :]) @ bary)
        np.add.at(loads[r], mesh.cells.ravel(), contrib.ravel())
    return loads


def _implicit_euler(ref, loads, robin_load, pmap, times, substeps):
    """Rise at every output time using ``substeps`` implicit Euler steps per interval."""
    h_out = np.diff(times)
    out = np.empty((len(times), ref.mass.shape[0]))
    out[0] = 0.0
    rise = out[0].copy()
    lus = {}
    for n, span in enumerate(h_out):
        h = span / substeps
        key = float(f"{h:.12e}")
        if key not in lus:
            m_h = ref.mass / h
            try:
                lus[key] = (m_h, spla.splu((m_h + ref.stiffness + ref.surface).tocsc()))
            except RuntimeError as exc:
                raise FactorizationError(f"DNS system matrix is singular: {exc}") from None
        m_h, lu = lus[key]
        sub_t = np.minimum(times[n] + h * np.arange(1, substeps + 1), pmap.times[-1])
        sub_t[-1] = times[n + 1]
        forcing = pmap.densities(sub_t).T @ loads + robin_load
        for f in forcing:
            rise = lu.solve(m_h @ rise + f)
        out[n + 1] = rise
    return out


def dns_simulate(mesh: TetMesh, mat: MaterialField, bc: BoundaryCondition, pmap: PowerMap,
                 t_amb: float, dt: float, n_steps: int, substeps: int = 1,
                 extrapolate: bool = False, rule: QuadRule | None = None) -> SnapshotSeries:
    """Implicit-Euler transient from ``T = t_amb`` at ``pmap.times[0]``.

    Returns ``n_steps + 1`` snapshots (the initial state included), spaced
    ``dt`` apart; each output interval is split into ``substeps`` implicit
    Euler steps. With ``extrapolate`` the run is repeated at half the step
    and combined as ``2 T(h/2) - T(h)`` (Richardson), which cancels the
    leading first-order error.
    """
    if mesh.n_dof > MAX_DOF:
        raise ValidationError(f"DNS oracle limited to {MAX_DOF} DoF, mesh has {mesh.n_dof}")
    if not dt > 0 or n_steps < 1 or substeps < 1:
        raise ValidationError("need dt > 0, n_steps >= 1 and substeps >= 1")
    rule = rule or quad_rule(2)
    t_start = float(pmap.times[0])
    times = t_start + dt * np.arange(n_steps + 1)
    if times[-1] > pmap.times[-1] + 1e-12 * max(1.0, abs(pmap.times[-1])):
        raise ValidationError(f"simulation end {times[-1]} beyond power map range "
                              f"{pmap.times[-1]}")
    times[-1] = min(times[-1], pmap.times[-1])

    ref = dns_reference_matrices(mesh, mat, bc)
    loads = region_loads(mesh, pmap, rule)
    robin_load = ref.surface_h_tref - t_amb * ref.surface_h
    rise = _implicit_euler(ref, loads, robin_load, pmap, times, substeps)
    if extrapolate:
        fine = _implicit_euler(ref, loads, robin_load, pmap, times, 2 * substeps)
        rise = 2.0 * fine - rise
    return SnapshotSeries(times, rise + t_amb, t_amb)
