"""Fixed-step classical RK4 for the reduced system ``C b' + G b = P(t)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from . import _binio
from .errors import DivergenceError, FactorizationError, ValidationError
from .galerkin import ReducedSystem
from .mesh import JacobianCache, TetMesh
from .pod import PODBasis, project
from .quadrature import QuadRule

# Negative real-axis extent of the classical RK4 stability region.
RK4_STABILITY_RADIUS = 2.785


@dataclass(frozen=True, eq=False)
class CoefficientTrajectory:
    """Modal weights; ``b[i]`` is the coefficient vector at ``times[i]``."""

    times: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if b.ndim != 2 or b.shape[0] != times.shape[0]:
            raise ValidationError(f"trajectory shape {b.shape} does not match "
                                  f"{times.shape[0]} timestamps")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("trajectory timestamps must be strictly increasing")
        if not np.all(np.isfinite(b)):
            raise ValidationError("trajectory contains non-finite coefficients")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.b.shape[1]

    def at(self, t) -> np.ndarray:
        """Linearly interpolated coefficients at time(s) ``t``."""
        return interp_rows(self.times, self.b, t)


def interp_rows(times, rows, t):
    """Piecewise-linear interpolation of the rows of ``rows`` sampled at ``times``."""
    t = np.asarray(t, dtype=np.float64)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    tol = 1e-12 * max(1.0, abs(times[-1]))
    if np.any(t < times[0] - tol) or np.any(t > times[-1] + tol):
        raise ValidationError(f"time outside sampled range [{times[0]}, {times[-1]}]")
    t = np.clip(t, times[0], times[-1])
    hi = np.clip(np.searchsorted(times, t, side="right"), 1, len(times) - 1)
    lo = hi - 1
    w = ((t - times[lo]) / (times[hi] - times[lo]))[:, None]
    out = (1.0 - w) * rows[lo] + w * rows[hi]
    return out[0] if scalar else out


def _factor(c):
    try:
        return la.cho_factor(c, lower=True)
    except la.LinAlgError:
        raise FactorizationError("C matrix is not symmetric positive definite; "
                                 "Cholesky factorization failed") from None


def rate_spectrum(sys: ReducedSystem) -> np.ndarray:
    """Eigenvalues of ``C^-1 G`` (real, from the symmetric-definite pencil)."""
    try:
        return la.eigh(sys.g, sys.c, eigvals_only=True)
    except la.LinAlgError:
        raise FactorizationError("C matrix is not symmetric positive definite") from None


def stability_limit(sys: ReducedSystem) -> float:
    """Largest stable RK4 step, ``2.785 / max eig(C^-1 G)``."""
    top = float(np.max(rate_spectrum(sys)))
    return RK4_STABILITY_RADIUS / top if top > 0 else np.inf


def time_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    n = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
    grid = t0 + dt * np.arange(n + 1)
    grid[-1] = t1
    return grid


def rk4_integrate(sys: ReducedSystem, b0, t0: float, t1: float, dt: float,
                  growth_limit: float = 1e3) -> CoefficientTrajectory:
    """Integrate from ``t0`` to ``t1``; the last step is shortened to land on ``t1``.

    ``C^-1`` is applied through a Cholesky factorization computed once.
    Forcing between the samples in ``sys.p`` is linearly interpolated.

    Raises
    ------
    DivergenceError
        When the state becomes non-finite or exceeds ``growth_limit`` times
        the a-priori energy bound ``|b0|_C + int |L^-1 P| dt`` that holds
        for the exact solution when G is positive semidefinite.
    """
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    if not t1 > t0:
        raise ValidationError(f"need t1 > t0, got [{t0}, {t1}]")
    tol = 1e-12 * max(1.0, abs(sys.p_times[-1]))
    if t0 < sys.p_times[0] - tol or t1 > sys.p_times[-1] + tol:
        raise ValidationError(f"integration window [{t0}, {t1}] not covered by forcing "
                              f"samples [{sys.p_times[0]}, {sys.p_times[-1]}]")
    b = np.array(b0, dtype=np.float64).reshape(-1)
    if b.shape[0] != sys.d:
        raise ValidationError(f"b0 has {b.shape[0]} entries, system has {sys.d} modes")

    chol = _factor(sys.c)
    lower = chol[0]
    a = la.cho_solve(chol, sys.g)
    pc = la.cho_solve(chol, sys.p.T).T

    grid = time_grid(t0, t1, dt)
    steps = np.diff(grid)
    mid = grid[:-1] + 0.5 * steps
    f_node = interp_rows(sys.p_times, pc, grid)
    f_mid = interp_rows(sys.p_times, pc, mid)

    # Energy bound uses |L^-1 P| = |L^T C^-1 P|.
    rates = rate_spectrum(sys)
    psd = rates.min() >= -1e-10 * max(1.0, float(np.abs(rates).max()))
    q = np.linalg.norm(f_node @ lower, axis=1)
    q_mid = np.linalg.norm(f_mid @ lower, axis=1)
    q_step = np.maximum(np.maximum(q[:-1], q[1:]), q_mid) * steps
    bound = np.linalg.norm(lower.T @ b) + np.concatenate([[0.0], np.cumsum(q_step)])
    limit = RK4_STABILITY_RADIUS / rates.max() if rates.max() > 0 else np.inf

    out = np.empty((len(grid), sys.d))
    out[0] = b
    at = a.T
    for n, h in enumerate(steps):
        k1 = f_node[n] - b @ at
        k2 = f_mid[n] - (b + 0.5 * h * k1) @ at
        k3 = f_mid[n] - (b + 0.5 * h * k2) @ at
        k4 = f_node[n + 1] - (b + h * k3) @ at
        b = b + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[n + 1] = b
        if not np.all(np.isfinite(b)) or (
                psd and np.linalg.norm(lower.T @ b) > growth_limit * bound[n + 1] * (1 + 1e-12)):
            raise DivergenceError(
                f"RK4 diverged at step {n + 1} (t = {grid[n + 1]:.6g}); reduce dt below "
                f"the stability estimate {limit:.6g}", step=n + 1)
    return CoefficientTrajectory(grid, out)


def project_initial(basis: PODBasis, field0, mesh: TetMesh, cache: JacobianCache,
                    rule: QuadRule) -> np.ndarray:
    """``b0_i = integral of field0 * eta_i``; field0 is a nodal rise field."""
    return project(basis, field0, mesh, cache, rule)[0]


def write_trajectory(traj: CoefficientTrajectory, path) -> None:
    w = _binio.Writer(b"PODB")
    w.u64(len(traj.times))
    w.u64(traj.d)
    w.array(traj.times)
    w.array(traj.b)
    w.save(path)


def load_trajectory(path) -> CoefficientTrajectory:
    try:
        r = _binio.Reader(_binio.read_file(path), path)
    except FileNotFoundError:
        raise ValidationError(f"trajectory file not found: {path}") from None
    r.header(b"PODB")
    n, d = r.u64(), r.u64()
    times = r.array(n)
    b = r.array(n, d)
    r.finish()
    return CoefficientTrajectory(times, b)
