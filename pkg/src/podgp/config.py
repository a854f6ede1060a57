"""Flat ``key = value`` run configuration.

Grammar: one ``key = value`` per line, ``#`` starts a comment line, blank
lines are ignored, later keys override earlier ones. Table rows use dotted
keys::

    mesh          = chip.tet
    snapshots     = train.pods
    powermap      = chip.pmap
    material.0    = 150 2330 700          # kappa rho c_s
    bc.bottom     = robin 2e4 300         # h t_ref
    bc.sides      = adiabatic
    modes         = 5
    quad_degree   = 2
    t0 = 0
    t1 = 0.2
    dt = 1e-4
    region        = zslab 3.75e-4 5e-4
    model.sm      = sm.podu sm.podr sm.tet sm.pmap
    instance.sm00 = sm 0.0 0.0 0.0 sm00.trace

Relative paths are resolved against the directory of the config file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, ValidationError
from .galerkin import BoundaryCondition, Robin
from .mesh import SURFACE_TAGS, MaterialField
from .reconstruct import Region

PATH_KEYS = {"mesh", "snapshots", "powermap", "basis", "system", "trajectory",
             "trajectory_dir", "prediction", "report", "bench", "chip_mesh"}
INT_KEYS = {"modes": None, "quad_degree": 2, "dns_steps": None, "dns_substeps": 1,
            "bench_repeats": 3, "threads": 0}
FLOAT_KEYS = {"t0", "t1", "dt", "t_amb", "dns_dt", "output_dt"}
BOOL_KEYS = {"dns_extrapolate": False}
OTHER_KEYS = {"region", "error_modes"}
TABLES = {"material", "bc", "model", "instance"}


def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ModelRow:
    basis: Path
    system: Path
    mesh: Path
    source: Path

    def __str__(self):
        return f"{self.basis} {self.system} {self.mesh} {self.source}"


@dataclass
class InstanceRow:
    model_id: str
    placement: tuple[float, float, float]
    trace: Path

    def __str__(self):
        dx, dy, dz = (repr(float(v)) for v in self.placement)
        return f"{self.model_id} {dx} {dy} {dz} {self.trace}"


@dataclass
class Config:
    values: dict = field(default_factory=dict)
    materials: dict = field(default_factory=dict)
    bc: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)
    instances: dict = field(default_factory=dict)
    source: Path | None = None

    def get(self, key, default=None):
        if key in self.values:
            return self.values[key]
        if key in INT_KEYS and INT_KEYS[key] is not None:
            return INT_KEYS[key]
        if key in BOOL_KEYS:
            return BOOL_KEYS[key]
        return default

    def require(self, key):
        value = self.get(key)
        if value is None:
            raise ConfigError(f"config key '{key}' is required for this command")
        return value

    @property
    def is_ensemble(self) -> bool:
        return bool(self.instances)

    def material_field(self) -> MaterialField:
        if not self.materials:
            raise ConfigError("no 'material.<tag>' entries in config")
        try:
            return MaterialField(dict(self.materials))
        except ValidationError as exc:
            raise ConfigError(str(exc)) from None

    def boundary(self) -> BoundaryCondition:
        return BoundaryCondition.from_names(dict(self.bc))

    def emit(self) -> str:
        """Canonical text form; parsing it yields an equivalent config."""
        lines = []
        for key in sorted(self.values):
            lines.append(f"{key} = {_fmt(self.values[key])}")
        for tag in sorted(self.materials):
            lines.append(f"material.{tag} = " + " ".join(repr(float(v)) for v in self.materials[tag]))
        for name in sorted(self.bc):
            r = self.bc[name]
            lines.append(f"bc.{name} = " + ("adiabatic" if r is None
                                              else f"robin {r.h!r} {r.t_ref!r}"))
        for mid in sorted(self.models):
            lines.append(f"model.{mid} = {self.models[mid]}")
        for name in sorted(self.instances):
            lines.append(f"instance.{name} = {self.instances[name]}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, base: Path | None = None, source: Path | None = None) -> Config:
    base = Path(base) if base is not None else Path.cwd()
    cfg = Config(source=source)

    def path(v):
        p = Path(v)
        return p if p.is_absolute() else (base / p).resolve()

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if "#" in value:
            value = value.split("#", 1)[0].strip()
        where = f"line {lineno} ({key})"
        try:
            if "." in key:
                table, name = key.split(".", 1)
                if table not in TABLES or not name:
                    raise ConfigError(f"{where}: unknown table key")
                tok = value.split()
                if table == "material":
                    kappa, rho, cs = (float(x) for x in tok)
                    cfg.materials[int(name)] = (kappa, rho, cs)
                elif table == "bc":
                    if name != "sides" and name not in SURFACE_TAGS:
                        raise ConfigError(f"{where}: unknown surface {name!r}; use one of "
                                          f"{sorted(SURFACE_TAGS) + ['sides']}")
                    if tok == ["adiabatic"]:
                        cfg.bc[name] = None
                    elif len(tok) == 3 and tok[0] == "robin":
                        cfg.bc[name] = Robin(float(tok[1]), float(tok[2]))
                    else:
                        raise ValueError
                elif table == "model":
                    b, s, m, src = tok
                    cfg.models[name] = ModelRow(path(b), path(s), path(m), path(src))
                else:
                    mid, dx, dy, dz, tr = tok
                    cfg.instances[name] = InstanceRow(mid, (float(dx), float(dy), float(dz)),
                                                      path(tr))
            elif key in PATH_KEYS:
                cfg.values[key] = path(value)
            elif key in INT_KEYS:
                cfg.values[key] = int(value)
            elif key in FLOAT_KEYS:
                cfg.values[key] = float(value)
            elif key in BOOL_KEYS:
                cfg.values[key] = _parse_bool(value)
            elif key == "region":
                cfg.values[key] = Region.parse(value)
            elif key == "error_modes":
                modes = [int(x) for x in value.replace(",", " ").split()]
                if not modes:
                    raise ValueError
                cfg.values[key] = " ".join(str(m) for m in modes)
            else:
                raise ConfigError(f"{where}: unknown key")
        except ConfigError:
            raise
        except (ValueError, ValidationError) as exc:
            detail = f": {exc}" if isinstance(exc, ValidationError) else ""
            raise ConfigError(f"{where}: bad value {value!r}{detail}") from None
    for mid, inst in ((n, r.model_id) for n, r in cfg.instances.items()):
        if inst not in cfg.models:
            raise ConfigError(f"instance.{mid}: unknown model {inst!r}")
    return cfg


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_config(text, base=path.parent, source=path)


def load_trace(path):
    """Read a ``trace 1`` file: header, count, then ``t density`` lines."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"trace file not found: {path}") from None
    rows = [ln.split() for ln in text.splitlines()
            if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or rows[0] != ["trace", "1"]:
        raise ParseError(f"{path}: missing 'trace 1' header")
    try:
        n = int(rows[1][0])
        data = np.array([[float(a), float(b)] for a, b in rows[2:]])
    except (IndexError, ValueError):
        raise ParseError(f"{path}: expected a count then 't density' lines") from None
    if data.shape != (n, 2):
        raise ParseError(f"{path}: header says {n} samples, found {len(rows) - 2}")
    if np.any(np.diff(data[:, 0]) <= 0) or np.any(data[:, 1] < 0):
        raise ValidationError(f"{path}: times must increase and densities be >= 0")
    return data[:, 0], data[:, 1]


def write_trace(times, values, path) -> None:
    lines = ["trace 1", str(len(times))]
    lines += [f"{float(t)!r} {float(v)!r}" for t, v in zip(times, values)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
