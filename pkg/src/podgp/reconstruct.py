"""Field reconstruction from modal weights and the least-squares error metric."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .mesh import JacobianCache, TetMesh
from .ode import CoefficientTrajectory, interp_rows
from .pod import PODBasis
from .quadrature import CellQuadrature, QuadRule, cell_quadrature
from .snapshots import SnapshotSeries


def predict_thermal(traj: CoefficientTrajectory, basis: PODBasis, t_amb: float) -> SnapshotSeries:
    """Row i of the result is ``B[i] @ U + t_amb``."""
    if traj.d != basis.d:
        raise ValidationError(f"trajectory has {traj.d} modes, basis has {basis.d}")
    return SnapshotSeries(traj.times, traj.b @ basis.u + t_amb, t_amb)


@dataclass(frozen=True)
class Region:
    """Cell selector: the whole mesh, or cells whose centroid has z in [z0, z1]."""

    kind: str = "all"
    z0: float = -np.inf
    z1: float = np.inf

    @classmethod
    def parse(cls, text: str) -> Region:
        tok = text.split()
        if tok == ["all"]:
            return cls()
        if len(tok) == 3 and tok[0] == "zslab":
            try:
                z0, z1 = float(tok[1]), float(tok[2])
            except ValueError:
                pass
            else:
                if z1 >= z0:
                    return cls("zslab", z0, z1)
        raise ValidationError(f"bad region {text!r}; use 'all' or 'zslab <z0> <z1>'")

    def __str__(self):
        return "all" if self.kind == "all" else f"zslab {self.z0!r} {self.z1!r}"

    def cell_mask(self, mesh: TetMesh) -> np.ndarray:
        if self.kind == "all":
            return np.ones(mesh.n_cells, dtype=bool)
        z = mesh.cell_centroids()[:, 2]
        return (z >= self.z0) & (z <= self.z1)


def resample(series: SnapshotSeries, times) -> SnapshotSeries:
    if np.array_equal(series.times, times):
        return series
    return SnapshotSeries(times, interp_rows(series.times, series.fields, times), series.t_amb)


def ls_error(pred: SnapshotSeries, truth: SnapshotSeries, mesh: TetMesh, cache: JacobianCache,
             rule: QuadRule, region: Region | str = "all",
             quad: CellQuadrature | None = None) -> float:
    """Relative L2 space-time error of ``pred`` against ``truth``.

    Both sums run over the truth timestamps; the reference scale is the
    truth's rise above its own ambient temperature.
    """
    region = Region.parse(region) if isinstance(region, str) else region
    truth.check_mesh(mesh)
    pred.check_mesh(mesh)
    pred = resample(pred, truth.times)
    quad = quad or cell_quadrature(mesh, cache, rule)
    w = quad.weights * region.cell_mask(mesh)[quad.cell]
    eq = quad.evaluate @ (pred.fields - truth.fields).T
    rq = quad.evaluate @ (truth.fields - truth.t_amb).T
    num = float(np.sum(w[:, None] * eq * eq))
    den = float(np.sum(w[:, None] * rq * rq))
    if den <= 0:
        raise ValidationError("reference series equals ambient over the region; "
                              "LS error is undefined")
    return float(np.sqrt(num / den))


def max_abs_error(pred: SnapshotSeries, truth: SnapshotSeries, mesh: TetMesh,
                  region: Region | str = "all") -> float:
    region = Region.parse(region) if isinstance(region, str) else region
    pred = resample(pred, truth.times)
    nodes = np.unique(mesh.cells[region.cell_mask(mesh)])
    return float(np.max(np.abs(pred.fields[:, nodes] - truth.fields[:, nodes]), initial=0.0))
