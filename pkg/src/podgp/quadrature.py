"""Reference-tetrahedron quadrature and P1 shape functions.

Reference tetrahedron vertices are (0,0,0), (1,0,0), (0,1,0), (0,0,1);
weights are in reference measure and sum to 1/6. Physical integrals scale
each weight by ``|det J|`` of the cell.

Rules (points in reference coordinates):

* degree 1: centroid, weight 1/6.
* degree 2: 4 points, barycentric permutations of (a, b, b, b) with
  a = (5 + 3*sqrt(5))/20, b = (5 - sqrt(5))/20, weight 1/24.
* degree 3: 5-point Keast rule; centroid with weight -2/15 and the
  permutations of (1/2, 1/6, 1/6, 1/6) with weight 3/40.
* degree 4: 11-point Keast rule; centroid weight -74/5625, permutations of
  (11/14, 1/14, 1/14, 1/14) weight 343/45000, and permutations of
  (a, a, b, b) with a = (1 + sqrt(5/14))/4, b = (1 - sqrt(5/14))/4,
  weight 56/2250.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .mesh import BoundaryFacetSet, JacobianCache, TetMesh

REF_GRADIENTS = np.array(
    [[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)


@dataclass(frozen=True)
class QuadRule:
    degree: int
    points: np.ndarray  # (k, 3) reference coordinates
    weights: np.ndarray  # (k,)

    @property
    def barycentric(self) -> np.ndarray:
        return _barycentric(self.points)


@dataclass(frozen=True)
class ShapeTable:
    values: np.ndarray  # (k, 4)
    ref_gradients: np.ndarray  # (4, 3)


def _barycentric(points):
    points = np.atleast_2d(points)
    return np.column_stack([1.0 - points.sum(axis=1), points])


def _orbit(bary):
    """Distinct permutations of a barycentric 4-tuple, as reference coords."""
    uniq = sorted(set(permutations(bary)))
    return np.array([u[1:] for u in uniq], dtype=np.float64)


def quad_rule(degree: int) -> QuadRule:
    if degree == 1:
        pts = np.array([[0.25, 0.25, 0.25]])
        wts = np.array([1.0 / 6.0])
    elif degree == 2:
        a = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
        b = (5.0 - np.sqrt(5.0)) / 20.0
        pts = _orbit((a, b, b, b))
        wts = np.full(4, 1.0 / 24.0)
    elif degree == 3:
        pts = np.vstack([[0.25, 0.25, 0.25], _orbit((0.5, 1 / 6, 1 / 6, 1 / 6))])
        wts = np.array([-2.0 / 15.0] + [3.0 / 40.0] * 4)
    elif degree == 4:
        a = (1.0 + np.sqrt(5.0 / 14.0)) / 4.0
        b = (1.0 - np.sqrt(5.0 / 14.0)) / 4.0
        pts = np.vstack([
            [0.25, 0.25, 0.25],
            _orbit((11 / 14, 1 / 14, 1 / 14, 1 / 14)),
            _orbit((a, a, b, b)),
        ])
        wts = np.array([-74.0 / 5625.0] + [343.0 / 45000.0] * 4 + [56.0 / 2250.0] * 6)
    else:
        raise ValidationError(f"unsupported quadrature degree {degree!r}; use 1..4")
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(degree, pts, wts)


def triangle_rule():
    """Degree-2, 3-point rule on the reference triangle (area 1/2).

    Returns barycentric coordinates (3, 3) and weights summing to 1/2.
    """
    bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    return bary, np.full(3, 1.0 / 6.0)


def shape_table(rule: QuadRule) -> ShapeTable:
    return ShapeTable(rule.barycentric, REF_GRADIENTS.copy())


def interpolate_cell(nodal, table: ShapeTable) -> np.ndarray:
    return table.values @ np.asarray(nodal, dtype=np.float64)


def physical_gradients(cell: int, cache: JacobianCache, table: ShapeTable) -> np.ndarray:
    """Rows are the physical-space gradients of the four P1 basis functions."""
    return table.ref_gradients @ cache.inv_j_t[cell].T


def all_physical_gradients(cache: JacobianCache) -> np.ndarray:
    """``(n_cells, 4, 3)`` batch version of :func:`physical_gradients`."""
    return np.einsum("jr,cxr->cjx", REF_GRADIENTS, cache.inv_j_t)


@dataclass(frozen=True, eq=False)
class CellQuadrature:
    """Quadrature points over a whole mesh.

    ``evaluate`` maps nodal vectors to values at every quadrature point
    (row ``c * k + q``), ``weights`` already include ``|det J|``.
    """

    evaluate: sp.csr_matrix
    weights: np.ndarray
    points: np.ndarray
    cell: np.ndarray

    def integrate_products(self, f, g=None, coeff=None):
        """Gram matrix ``F W G^T`` of nodal fields given as rows of f, g."""
        fq = self.evaluate @ np.atleast_2d(f).T
        gq = fq if g is None else self.evaluate @ np.atleast_2d(g).T
        w = self.weights if coeff is None else self.weights * coeff[self.cell]
        return fq.T @ (w[:, None] * gq)


def cell_quadrature(mesh: TetMesh, cache: JacobianCache, rule: QuadRule) -> CellQuadrature:
    k = len(rule.weights)
    values = rule.barycentric  # (k, 4)
    m = mesh.n_cells
    rows = np.repeat(np.arange(m * k), 4)
    cols = np.repeat(mesh.cells, k, axis=0).ravel()
    data = np.tile(values.ravel(), m)
    ev = sp.csr_matrix((data, (rows, cols)), shape=(m * k, mesh.n_dof))
    weights = (np.abs(cache.det_j)[:, None] * rule.weights[None, :]).ravel()
    points = np.einsum("qj,cjx->cqx", values, mesh.vertices[mesh.cells]).reshape(-1, 3)
    return CellQuadrature(ev, weights, points, np.repeat(np.arange(m), k))


@dataclass(frozen=True, eq=False)
class FacetQuadrature:
    evaluate: sp.csr_matrix
    weights: np.ndarray
    points: np.ndarray
    facet: np.ndarray


def facet_quadrature(mesh: TetMesh, facets: BoundaryFacetSet, select=None) -> FacetQuadrature:
    """Degree-2 triangle quadrature over (a subset of) boundary facets."""
    idx = np.arange(len(facets)) if select is None else np.nonzero(select)[0]
    bary, w = triangle_rule()
    n = len(idx)
    rows = np.repeat(np.arange(n * 3), 3)
    cols = np.repeat(facets.vertices[idx], 3, axis=0).ravel()
    data = np.tile(bary.ravel(), n)
    ev = sp.csr_matrix((data, (rows, cols)), shape=(n * 3, mesh.n_dof))
    weights = (2.0 * facets.area[idx][:, None] * w[None, :]).ravel()
    points = np.einsum("qj,fjx->fqx", bary, mesh.vertices[facets.vertices[idx]]).reshape(-1, 3)
    return FacetQuadrature(ev, weights, points, np.repeat(idx, 3))
