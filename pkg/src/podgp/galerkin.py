"""Galerkin projection of the heat equation onto a POD basis.

Produces the reduced system ``C db/dt + G b = P(t)`` in temperature-rise
form. Surfaces are either adiabatic or convective (Robin,
``-kappa dT/dn = h (T - t_ref)``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _binio
from .errors import ValidationError
from .mesh import SURFACE_TAGS, BoundaryFacetSet, JacobianCache, MaterialField, TetMesh
from .pod import PODBasis
from .quadrature import (CellQuadrature, QuadRule, all_physical_gradients,
                         cell_quadrature, facet_quadrature)
from .snapshots import PowerMap


@dataclass(frozen=True)
class Robin:
    h: float
    t_ref: float

    def __post_init__(self):
        if not (np.isfinite(self.h) and self.h >= 0):
            raise ValidationError(f"Robin coefficient h must be >= 0, got {self.h}")


@dataclass
class BoundaryCondition:
    """Closure per surface tag; tags not listed are adiabatic."""

    robin: dict[int, Robin] = field(default_factory=dict)

    @classmethod
    def adiabatic(cls):
        return cls({})

    @classmethod
    def from_names(cls, spec: dict[str, Robin | None]):
        out = {}
        # "sides" is applied first so that explicit surfaces override it.
        for name, closure in sorted(spec.items(), key=lambda kv: kv[0] != "sides"):
            names = ["xmin", "xmax", "ymin", "ymax"] if name == "sides" else [name]
            for n in names:
                if n not in SURFACE_TAGS:
                    raise ValidationError(f"unknown surface {n!r}")
                if closure is not None:
                    out[SURFACE_TAGS[n]] = closure
                else:
                    out.pop(SURFACE_TAGS[n], None)
        return cls(out)

    def facet_coefficients(self, facets: BoundaryFacetSet):
        """Per-facet ``h`` and ``h * t_ref`` arrays (zero on adiabatic facets)."""
        h = np.zeros(len(facets))
        h_tref = np.zeros(len(facets))
        for tag, r in self.robin.items():
            sel = facets.surface_tag == tag
            h[sel] = r.h
            h_tref[sel] = r.h * r.t_ref
        return h, h_tref

    @property
    def has_convection(self) -> bool:
        return any(r.h > 0 for r in self.robin.values())


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    c: np.ndarray
    g: np.ndarray
    p: np.ndarray  # (n_t, d) forcing samples
    p_times: np.ndarray
    bc: BoundaryCondition = field(default_factory=BoundaryCondition)

    @property
    def d(self) -> int:
        return self.c.shape[0]

    def truncate(self, d: int) -> ReducedSystem:
        """Leading ``d`` modes; exact because the basis is nested by energy."""
        if not 1 <= d <= self.d:
            raise ValidationError(f"cannot truncate a {self.d}-mode system to {d} modes")
        return replace(self, c=self.c[:d, :d], g=self.g[:d, :d], p=self.p[:, :d])


def _sym(x):
    return 0.5 * (x + x.T)


def calc_C(basis: PODBasis, mesh: TetMesh, cache: JacobianCache, rule: QuadRule,
           mat: MaterialField, quad: CellQuadrature | None = None) -> np.ndarray:
    quad = quad or cell_quadrature(mesh, cache, rule)
    _, heat_cap = mat.per_cell(mesh)
    return _sym(quad.integrate_products(basis.u, coeff=heat_cap))


def calc_G(basis: PODBasis, mesh: TetMesh, cache: JacobianCache, rule: QuadRule,
           mat: MaterialField, bfacets: BoundaryFacetSet, bc: BoundaryCondition) -> np.ndarray:
    kappa, _ = mat.per_cell(mesh)
    grads = all_physical_gradients(cache)  # (m, 4, 3)
    mode_grads = np.einsum("dcj,cjx->cdx", basis.u[:, mesh.cells], grads)
    # P1 gradients are constant per cell: the quadrature sum collapses to the weight sum.
    w = kappa * np.abs(cache.det_j) * rule.weights.sum()
    g = np.einsum("cdx,cex,c->de", mode_grads, mode_grads, w, optimize=True)
    h, _ = bc.facet_coefficients(bfacets)
    if np.any(h > 0):
        fq = facet_quadrature(mesh, bfacets, h > 0)
        vals = fq.evaluate @ basis.u.T
        g += vals.T @ ((fq.weights * h[fq.facet])[:, None] * vals)
    return _sym(g)


def source_vectors(basis: PODBasis, mesh: TetMesh, cache: JacobianCache, rule: QuadRule,
                   pmap: PowerMap, quad: CellQuadrature | None = None) -> np.ndarray:
    """``(n_regions, d)``: integral of each mode over each unit-density box.

    Box membership is tested pointwise at quadrature points.
    """
    pmap.check_within(mesh)
    quad = quad or cell_quadrature(mesh, cache, rule)
    vals = quad.evaluate @ basis.u.T
    ind = pmap.indicator(quad.points)
    return ind @ (quad.weights[:, None] * vals)


def boundary_load(basis: PODBasis, mesh: TetMesh, bfacets: BoundaryFacetSet,
                  bc: BoundaryCondition, t_amb: float) -> np.ndarray:
    """Robin contribution ``sum h (t_ref - t_amb) * integral of eta_i dS``."""
    h, h_tref = bc.facet_coefficients(bfacets)
    load = h_tref - h * t_amb
    if not np.any(load != 0):
        return np.zeros(basis.d)
    fq = facet_quadrature(mesh, bfacets, load != 0)
    vals = fq.evaluate @ basis.u.T
    return (fq.weights * load[fq.facet]) @ vals


def calc_P(basis: PODBasis, mesh: TetMesh, cache: JacobianCache, rule: QuadRule,
           pmap: PowerMap, bc: BoundaryCondition, bfacets: BoundaryFacetSet,
           t_amb: float, quad: CellQuadrature | None = None):
    """Forcing samples at the power-map timestamps.

    Returns ``(p, times)`` with ``p`` of shape ``(n_times, d)``.
    """
    src = source_vectors(basis, mesh, cache, rule, pmap, quad)
    p = pmap.traces.T @ src
    p += boundary_load(basis, mesh, bfacets, bc, t_amb)[None, :]
    return p, pmap.times.copy()


def assemble(basis: PODBasis, mesh: TetMesh, cache: JacobianCache, rule: QuadRule,
             mat: MaterialField, bfacets: BoundaryFacetSet, bc: BoundaryCondition,
             pmap: PowerMap, t_amb: float) -> ReducedSystem:
    quad = cell_quadrature(mesh, cache, rule)
    c = calc_C(basis, mesh, cache, rule, mat, quad)
    g = calc_G(basis, mesh, cache, rule, mat, bfacets, bc)
    p, times = calc_P(basis, mesh, cache, rule, pmap, bc, bfacets, t_amb, quad)
    return ReducedSystem(c, g, p, times, bc)


_KINDS = {0: "adiabatic", 1: "robin"}


def write_system(sys: ReducedSystem, path) -> None:
    w = _binio.Writer(b"PODR")
    w.u64(sys.d)
    w.u64(len(sys.p_times))
    w.array(sys.c)
    w.array(sys.g)
    w.array(sys.p_times)
    w.array(sys.p)
    w.u64(len(sys.bc.robin))
    for tag in sorted(sys.bc.robin):
        r = sys.bc.robin[tag]
        w.i64(tag)
        w.u32(1)
        w.f64(r.h)
        w.f64(r.t_ref)
    w.save(path)


def load_system(path) -> ReducedSystem:
    try:
        r = _binio.Reader(_binio.read_file(path), path)
    except FileNotFoundError:
        raise ValidationError(f"reduced system file not found: {path}") from None
    r.header(b"PODR")
    d, n_t = r.u64(), r.u64()
    c = r.array(d, d)
    g = r.array(d, d)
    times = r.array(n_t)
    p = r.array(n_t, d)
    robin = {}
    for _ in range(r.u64()):
        tag, kind, h, t_ref = r.i64(), r.u32(), r.f64(), r.f64()
        if kind not in _KINDS:
            raise ValidationError(f"{path}: unknown boundary kind {kind}")
        if kind == 1:
            robin[tag] = Robin(h, t_ref)
    r.finish()
    return ReducedSystem(c, g, p, times, BoundaryCondition(robin))
