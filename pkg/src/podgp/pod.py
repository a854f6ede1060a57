"""POD by the method of snapshots.

The time-correlation matrix ``A`` of the temperature-rise snapshots is
diagonalized, and each eigenvector is mapped back to a nodal field by a
linear combination of the snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from . import _binio
from .errors import RankError, ValidationError
from .mesh import JacobianCache, TetMesh
from .quadrature import CellQuadrature, QuadRule, cell_quadrature
from .snapshots import SnapshotSeries

RANK_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    a: np.ndarray

    @property
    def n_t(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True, eq=False)
class PODBasis:
    """``u[k]`` holds the nodal values of mode k, ordered by descending energy."""

    u: np.ndarray
    eigvals: np.ndarray
    total_energy: float

    @property
    def d(self) -> int:
        return self.u.shape[0]

    @property
    def n_dof(self) -> int:
        return self.u.shape[1]

    def truncate(self, d: int) -> PODBasis:
        if not 1 <= d <= self.d:
            raise ValidationError(f"cannot truncate a {self.d}-mode basis to {d} modes")
        return PODBasis(self.u[:d], self.eigvals[:d], self.total_energy)


def calc_A(series: SnapshotSeries, mesh: TetMesh, cache: JacobianCache,
           rule: QuadRule, quad: CellQuadrature | None = None) -> CorrelationMatrix:
    """Correlation matrix ``A_ij = (1/N_t) * integral of T_i T_j`` over the domain.

    ``series`` must already hold temperature rise (see ``subtract_ambient``).
    """
    series.check_mesh(mesh)
    quad = quad or cell_quadrature(mesh, cache, rule)
    a = quad.integrate_products(series.fields) / series.n_t
    return CorrelationMatrix(0.5 * (a + a.T))


def _orthonormalize(u, uq, w):
    """Gram-Schmidt (two passes) in the quadrature L2 inner product.

    Leading modes are left as they are up to round-off; trailing modes with
    tiny eigenvalues lose orthogonality in the snapshot map and get repaired.
    """
    for k in range(u.shape[0]):
        for _ in range(2):
            if k:
                coef = uq[:, :k].T @ (w * uq[:, k])
                u[k] -= coef @ u[:k]
                uq[:, k] -= uq[:, :k] @ coef
        nrm = np.sqrt(uq[:, k] @ (w * uq[:, k]))
        u[k] /= nrm
        uq[:, k] /= nrm


def get_modes(a: CorrelationMatrix, series: SnapshotSeries, d: int, mesh: TetMesh,
              cache: JacobianCache, rule: QuadRule,
              quad: CellQuadrature | None = None) -> PODBasis:
    """Top ``d`` POD modes, L2(domain)-orthonormal under the quadrature.

    Raises
    ------
    RankError
        If ``d`` exceeds the numerical rank, i.e. ``lambda_d <= 1e-12 * lambda_1``.
    """
    n_t = a.n_t
    if series.n_t != n_t:
        raise ValidationError(f"correlation matrix is {n_t}x{n_t} but series has "
                              f"{series.n_t} snapshots")
    if d < 1:
        raise ValidationError(f"mode count must be >= 1, got {d}")
    lam, vec = la.eigh(a.a)
    lam, vec = lam[::-1], vec[:, ::-1]
    total = float(np.clip(lam, 0.0, None).sum())
    usable = int(np.count_nonzero(lam > RANK_EPS * lam[0])) if lam[0] > 0 else 0
    if d > usable:
        raise RankError(f"requested {d} modes but the snapshot data has numerical rank "
                        f"{usable} (of {n_t} snapshots)", usable)
    lam, vec = lam[:d], vec[:, :d]
    u = (vec.T @ series.fields) / np.sqrt(n_t * lam)[:, None]

    quad = quad or cell_quadrature(mesh, cache, rule)
    uq = quad.evaluate @ u.T
    _orthonormalize(u, uq, quad.weights)

    # Deterministic sign: the largest-magnitude entry of every mode is positive.
    pivot = np.argmax(np.abs(u), axis=1)
    signs = np.sign(u[np.arange(d), pivot])
    u *= signs[:, None]
    return PODBasis(u, lam.copy(), total)


def energy_fraction(basis: PODBasis) -> float:
    if basis.total_energy <= 0:
        raise ValidationError("total snapshot energy is zero; POD energy fraction undefined")
    return float(min(1.0, basis.eigvals.sum() / basis.total_energy))


def project(basis: PODBasis, fields, mesh: TetMesh, cache: JacobianCache,
            rule: QuadRule, quad: CellQuadrature | None = None) -> np.ndarray:
    """L2 projection coefficients ``(n_fields, d)`` of nodal fields onto the modes."""
    quad = quad or cell_quadrature(mesh, cache, rule)
    return quad.integrate_products(np.atleast_2d(fields), basis.u)


def write_basis(basis: PODBasis, path) -> None:
    w = _binio.Writer(b"PODU")
    w.u64(basis.d)
    w.u64(basis.n_dof)
    w.array(basis.eigvals)
    w.f64(basis.total_energy)
    w.array(basis.u)
    w.save(path)


def load_basis(path) -> PODBasis:
    try:
        r = _binio.Reader(_binio.read_file(path), path)
    except FileNotFoundError:
        raise ValidationError(f"basis file not found: {path}") from None
    r.header(b"PODU")
    d, n = r.u64(), r.u64()
    eig = r.array(d)
    total = r.f64()
    u = r.array(d, n)
    r.finish()
    return PODBasis(u, eig, total)
