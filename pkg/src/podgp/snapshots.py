"""Temperature snapshot series and floorplan power maps."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _binio
from .errors import GeometryError, ParseError, ValidationError
from .mesh import TetMesh


def _check_times(times, what):
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or not np.all(np.isfinite(times)):
        raise ValidationError(f"{what}: timestamps must be a finite 1-D array")
    bad = np.nonzero(np.diff(times) <= 0)[0]
    if bad.size:
        i = int(bad[0])
        raise ValidationError(f"{what}: timestamps not strictly increasing at index {i + 1} "
                              f"({times[i]!r} -> {times[i + 1]!r})")
    return times


@dataclass(frozen=True, eq=False)
class SnapshotSeries:
    """Nodal temperature fields; ``fields[i]`` is the state at ``times[i]``."""

    times: np.ndarray
    fields: np.ndarray
    t_amb: float

    def __post_init__(self):
        times = _check_times(self.times, "snapshot series")
        fields = np.asarray(self.fields, dtype=np.float64)
        if fields.ndim != 2 or fields.shape[0] != times.shape[0]:
            raise ValidationError(f"fields shape {fields.shape} does not match "
                                  f"{times.shape[0]} timestamps")
        if times.shape[0] < 2:
            raise ValidationError("snapshot series needs at least 2 time steps")
        if not np.all(np.isfinite(fields)):
            row = int(np.nonzero(~np.all(np.isfinite(fields), axis=1))[0][0])
            raise ValidationError(f"non-finite temperature in snapshot {row}")
        if not np.isfinite(self.t_amb):
            raise ValidationError("t_amb must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "fields", fields)
        object.__setattr__(self, "t_amb", float(self.t_amb))

    @property
    def n_t(self) -> int:
        return self.times.shape[0]

    @property
    def n_dof(self) -> int:
        return self.fields.shape[1]

    def check_mesh(self, mesh: TetMesh):
        if self.n_dof != mesh.n_dof:
            raise ValidationError(f"DoF mismatch: snapshots have {self.n_dof} DoF, "
                                  f"mesh has {mesh.n_dof}")


def write_snapshots(series: SnapshotSeries, path) -> None:
    w = _binio.Writer(b"PODS")
    w.u64(series.n_t)
    w.u64(series.n_dof)
    w.f64(series.t_amb)
    w.array(series.times)
    w.array(series.fields)
    w.save(path)


def load_snapshots(path, mesh: TetMesh | None = None) -> SnapshotSeries:
    try:
        r = _binio.Reader(_binio.read_file(path), path)
    except FileNotFoundError:
        raise ValidationError(f"snapshot file not found: {path}") from None
    r.header(b"PODS")
    n_t, n_dof = r.u64(), r.u64()
    t_amb = r.f64()
    times = r.array(n_t)
    fields = r.array(n_t, n_dof)
    r.finish()
    series = SnapshotSeries(times, fields, t_amb)
    if mesh is not None:
        series.check_mesh(mesh)
    return series


def subtract_ambient(series: SnapshotSeries) -> SnapshotSeries:
    """Temperature rise ``T - t_amb``; the recorded ambient is kept."""
    return replace(series, fields=series.fields - series.t_amb)


@dataclass(frozen=True, eq=False)
class PowerMap:
    """Axis-aligned heat-source boxes with piecewise-linear density traces.

    Attributes
    ----------
    boxes : (n_regions, 6) array of ``xmin ymin zmin xmax ymax zmax``
    traces : (n_regions, n_times) power density in W/m^3
    times : (n_times,) timestamps
    """

    boxes: np.ndarray
    traces: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        times = _check_times(self.times, "power map")
        boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 6)
        traces = np.asarray(self.traces, dtype=np.float64).reshape(boxes.shape[0], -1)
        if traces.shape[1] != times.shape[0]:
            raise ValidationError("power map: each trace needs one value per timestamp")
        if np.any(boxes[:, 3:] < boxes[:, :3]):
            raise ValidationError("power map: box max corner below min corner")
        if not np.all(np.isfinite(traces)) or np.any(traces < 0):
            raise ValidationError("power map: densities must be finite and >= 0")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "traces", traces)

    @property
    def n_regions(self) -> int:
        return self.boxes.shape[0]

    def check_within(self, mesh: TetMesh):
        lo, hi = mesh.bounds
        tol = 1e-9 * float(np.linalg.norm(hi - lo))
        for r, box in enumerate(self.boxes):
            if np.any(box[:3] < lo - tol) or np.any(box[3:] > hi + tol):
                raise GeometryError(f"power region {r} {box.tolist()} lies outside the "
                                    f"mesh bounding box {lo.tolist()} - {hi.tolist()}")

    def indicator(self, points) -> np.ndarray:
        """``(n_regions, n_points)`` 0/1 membership of points in each box."""
        p = np.atleast_2d(points)
        lo, hi = self.boxes[:, None, :3], self.boxes[:, None, 3:]
        return np.all((p[None] >= lo) & (p[None] <= hi), axis=2).astype(np.float64)

    def densities(self, t) -> np.ndarray:
        """Per-region density at time(s) t; shape ``(n_regions,)`` or ``(n_regions, len(t))``."""
        t_arr = np.asarray(t, dtype=np.float64)
        tol = 1e-12 * max(1.0, abs(self.times[-1]))
        if np.any(t_arr < self.times[0] - tol) or np.any(t_arr > self.times[-1] + tol):
            raise ValidationError(f"time {t!r} outside power map range "
                                  f"[{self.times[0]}, {self.times[-1]}]; no extrapolation")
        return np.stack([np.interp(t_arr, self.times, tr) for tr in self.traces])

    def __add__(self, other: PowerMap) -> PowerMap:
        if not np.array_equal(self.times, other.times):
            raise ValidationError("cannot add power maps with different timestamps")
        return PowerMap(np.vstack([self.boxes, other.boxes]),
                        np.vstack([self.traces, other.traces]), self.times)


def power_at(pmap: PowerMap, point, t) -> float:
    return float(pmap.indicator(point)[:, 0] @ pmap.densities(t))


def load_powermap(path) -> PowerMap:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"power map file not found: {path}") from None
    rows = [(i + 1, ln.split()) for i, ln in enumerate(text.splitlines())
            if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or rows[0][1] != ["powermap", "1"]:
        raise ParseError(f"{path}: missing 'powermap 1' header")
    try:
        n_reg, n_times = (int(x) for x in rows[1][1])
    except (IndexError, ValueError):
        raise ParseError(f"{path}: expected '<n_regions> <n_times>' on the second line") from None
    tokens = [(ln, tok) for ln, toks in rows[2:] for tok in toks]
    need = n_times + n_reg * (6 + n_times)
    if len(tokens) != need:
        raise ParseError(f"{path}: expected {need} numbers after the header, "
                         f"found {len(tokens)}")
    vals = []
    for ln, tok in tokens:
        try:
            vals.append(float(tok))
        except ValueError:
            raise ParseError(f"{path}: line {ln}: bad number {tok!r}") from None
    vals = np.array(vals)
    times = vals[:n_times]
    body = vals[n_times:].reshape(n_reg, 6 + n_times)
    return PowerMap(body[:, :6], body[:, 6:], times)


def write_powermap(pmap: PowerMap, path) -> None:
    out = ["powermap 1", f"{pmap.n_regions} {len(pmap.times)}",
           " ".join(repr(float(t)) for t in pmap.times)]
    for box, tr in zip(pmap.boxes, pmap.traces):
        out.append(" ".join(repr(float(x)) for x in np.concatenate([box, tr])))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
