"""Local ensemble of heat-source-block (HSB) models.

Each HSB is simulated by a reduced model trained on a truncated domain
around it. Identical blocks share one model; every placed instance gets
its own power trace. The chip-wide temperature rise is the sum of the
instance rises, interpolated from each truncated mesh onto the chip mesh.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError, PodgpError, ValidationError
from .galerkin import ReducedSystem
from .mesh import MaterialField, TetMesh
from .ode import CoefficientTrajectory, rk4_integrate
from .pod import PODBasis


class PointLocator:
    """Uniform-grid bucket search for the tetrahedron containing a point."""

    def __init__(self, mesh: TetMesh, tol: float = 1e-10):
        self.mesh = mesh
        self.tol = tol
        p = mesh.vertices[mesh.cells]
        self.origin = p[:, 0]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=-1)
        self.inv = np.linalg.inv(jac)
        cmin, cmax = p.min(axis=1), p.max(axis=1)
        self.lo, hi = mesh.bounds
        self.size = np.maximum((cmax - cmin).mean(axis=0), 1e-300)
        self.shape = np.maximum(np.ceil((hi - self.lo) / self.size).astype(int), 1)
        first = self._bucket(cmin)
        last = self._bucket(cmax)
        buckets: dict[tuple, list[int]] = {}
        for c in range(mesh.n_cells):
            for key in itertools.product(*(range(a, b + 1) for a, b in zip(first[c], last[c]))):
                buckets.setdefault(key, []).append(c)
        self.buckets = {k: np.array(v) for k, v in buckets.items()}

    def _bucket(self, pts):
        idx = np.floor((pts - self.lo) / self.size).astype(int)
        return np.clip(idx, 0, self.shape - 1)

    def barycentric(self, cells, point):
        lam = np.einsum("cij,cj->ci", self.inv[cells], point - self.origin[cells])
        return np.column_stack([1.0 - lam.sum(axis=1), lam])

    def locate(self, points):
        """Containing cell (or -1) and barycentric coordinates for each point."""
        points = np.atleast_2d(points)
        cells = np.full(len(points), -1)
        bary = np.zeros((len(points), 4))
        for i, (pt, key) in enumerate(zip(points, self._bucket(points))):
            cand = self.buckets.get(tuple(key))
            if cand is None:
                continue
            lam = self.barycentric(cand, pt)
            ok = np.nonzero(np.all(lam >= -self.tol, axis=1))[0]
            if ok.size:
                cells[i] = cand[ok[0]]
                bary[i] = lam[ok[0]]
        return cells, bary


def brute_force_locate(mesh: TetMesh, points, tol: float = 1e-10):
    """Reference point location scanning every cell."""
    points = np.atleast_2d(points)
    p = mesh.vertices[mesh.cells]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=-1)
    inv = np.linalg.inv(jac)
    cells = np.full(len(points), -1)
    bary = np.zeros((len(points), 4))
    for i, pt in enumerate(points):
        lam = np.einsum("cij,cj->ci", inv, pt - p[:, 0])
        lam = np.column_stack([1.0 - lam.sum(axis=1), lam])
        ok = np.nonzero(np.all(lam >= -tol, axis=1))[0]
        if ok.size:
            cells[i] = ok[0]
            bary[i] = lam[ok[0]]
    return cells, bary


@dataclass(frozen=True)
class Trace:
    times: np.ndarray
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class HSBModel:
    """A shared reduced model.

    ``source`` is the projection of a unit power density over the block's
    heat source onto the modes; instance forcing is ``trace(t) * source``.
    """

    basis: PODBasis
    system: ReducedSystem
    mesh: TetMesh
    source: np.ndarray
    material: MaterialField | None = None


@dataclass(frozen=True)
class HSBInstance:
    name: str
    model_id: str
    placement: tuple[float, float, float]
    trace_id: str


@dataclass(eq=False)
class ChipAssembly:
    chip_mesh: TetMesh
    instances: list[HSBInstance]
    models: dict[str, HSBModel]
    traces: dict[str, Trace]
    t_amb: float = 0.0
    _locators: dict = field(default_factory=dict, repr=False)
    _maps: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        names = [inst.name for inst in self.instances]
        if len(set(names)) != len(names):
            raise ValidationError("instance names must be unique")
        lo, hi = self.chip_mesh.bounds
        tol = 1e-9 * float(np.linalg.norm(hi - lo))
        materials = []
        for inst in self.instances:
            model = self.models.get(inst.model_id)
            if model is None:
                raise ValidationError(f"instance {inst.name}: unknown model {inst.model_id!r}")
            if inst.trace_id not in self.traces:
                raise ValidationError(f"instance {inst.name}: unknown trace {inst.trace_id!r}")
            mlo, mhi = model.mesh.bounds
            off = np.asarray(inst.placement, dtype=np.float64)
            if np.any(mlo + off < lo - tol) or np.any(mhi + off > hi + tol):
                raise GeometryError(f"instance {inst.name}: truncated domain "
                                    f"{(mlo + off).tolist()} - {(mhi + off).tolist()} "
                                    "leaves the chip bounding box")
        for mid, model in self.models.items():
            for tag, robin in model.system.bc.robin.items():
                if robin.h > 0 and robin.t_ref != self.t_amb:
                    raise ValidationError(
                        f"model {mid}: Robin surface {tag} has t_ref={robin.t_ref} != "
                        f"t_amb={self.t_amb}; superposition needs homogeneous rise BCs")
            if model.material is not None:
                materials.append(model.material.regions)
        if any(m != materials[0] for m in materials[1:]):
            raise ValidationError("all ensemble models must share the same material model")

    def ordered(self) -> list[HSBInstance]:
        return sorted(self.instances, key=lambda inst: inst.name)

    def locator(self, model_id: str) -> PointLocator:
        if model_id not in self._locators:
            self._locators[model_id] = PointLocator(self.models[model_id].mesh)
        return self._locators[model_id]

    def placement_matrix(self, inst: HSBInstance) -> sp.csr_matrix:
        """Sparse P1 interpolation from the instance's truncated mesh to chip vertices."""
        key = (inst.model_id, tuple(inst.placement))
        if key in self._maps:
            return self._maps[key]
        model = self.models[inst.model_id]
        local = self.chip_mesh.vertices - np.asarray(inst.placement, dtype=np.float64)
        mlo, mhi = model.mesh.bounds
        tol = 1e-9 * float(np.linalg.norm(mhi - mlo))
        inside = np.nonzero(np.all((local >= mlo - tol) & (local <= mhi + tol), axis=1))[0]
        cells, bary = self.locator(inst.model_id).locate(local[inside])
        if np.any(cells < 0):
            v = int(inside[np.nonzero(cells < 0)[0][0]])
            raise GeometryError(f"instance {inst.name}: chip vertex {v} at "
                                f"{self.chip_mesh.vertices[v].tolist()} lies in the truncated "
                                "domain bounding box but in no cell")
        rows = np.repeat(inside, 4)
        cols = model.mesh.cells[cells].ravel()
        mat = sp.csr_matrix((bary.ravel(), (rows, cols)),
                            shape=(self.chip_mesh.n_dof, model.mesh.n_dof))
        self._maps[key] = mat
        return mat


def instance_system(asm: ChipAssembly, inst: HSBInstance) -> ReducedSystem:
    model = asm.models[inst.model_id]
    trace = asm.traces[inst.trace_id]
    p = np.outer(trace.values, model.source)
    return replace(model.system, p=p, p_times=np.asarray(trace.times, dtype=np.float64))


def run_ensemble(asm: ChipAssembly, t0: float, t1: float, dt: float,
                 workers: int | None = None) -> dict[str, CoefficientTrajectory]:
    """Integrate every instance from rest; returns trajectories keyed by instance name."""

    def one(inst):
        model = asm.models[inst.model_id]
        try:
            return rk4_integrate(instance_system(asm, inst), np.zeros(model.basis.d), t0, t1, dt)
        except PodgpError as exc:
            exc.args = (f"instance {inst.name}: {exc.args[0]}",) + exc.args[1:]
            raise

    order = asm.ordered()
    if workers == 1 or len(order) < 2:
        results = [one(inst) for inst in order]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, order))
    return {inst.name: traj for inst, traj in zip(order, results)}


def assemble_field(asm: ChipAssembly, trajectories: dict[str, CoefficientTrajectory],
                   t: float) -> np.ndarray:
    """Chip-wide nodal temperature rise at time ``t`` (sum over instances by name)."""
    total = np.zeros(asm.chip_mesh.n_dof)
    for inst in asm.ordered():
        model = asm.models[inst.model_id]
        local = trajectories[inst.name].at(t) @ model.basis.u
        total += asm.placement_matrix(inst) @ local
    return total
