"""Small self-contained demo case: a 6 x 6 x 0.6 mm silicon die."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import box_mesh, write_mesh
from .snapshots import PowerMap, write_powermap

DEMO_CONFIG = """\
# Demo case. Run in order: dns, train, infer, predict, error, bench.
mesh        = mesh.tet
powermap    = power.pmap
snapshots   = out/train.pods
basis       = out/basis.podu
system      = out/system.podr
trajectory  = out/traj.podb
prediction  = out/pred.pods
report      = out/error.csv
bench       = out/bench.csv

# silicon: kappa [W/(m K)], rho [kg/m^3], c_s [J/(kg K)]
material.0  = 150 2330 700
# placeholder heat-sink coefficient, not a measured package value
bc.bottom   = robin 2e4 300
bc.top      = adiabatic
bc.sides    = adiabatic

t_amb        = 300
dns_dt       = 1e-3
dns_steps    = 100
dns_substeps = 5

modes       = 4
quad_degree = 2
t0          = 0
t1          = 0.1
dt          = 1e-4
region      = zslab 4.5e-4 6e-4
error_modes = 1 2 3 4
"""


def demo_case():
    mesh = box_mesh((6, 6, 3), (6e-3, 6e-3, 0.6e-3))
    times = np.linspace(0.0, 0.1, 101)
    ramp = np.where(times < 0.02, np.sin(0.5 * np.pi * times / 0.02) ** 2, 1.0)
    traces = np.stack([
        2e9 * ramp * (1.0 + 0.5 * np.sin(2 * np.pi * 10 * times)),
        1e9 * ramp * (1.0 + 0.5 * np.cos(2 * np.pi * 15 * times)),
    ])
    boxes = np.array([[1e-3, 1e-3, 4e-4, 3e-3, 3e-3, 6e-4],
                      [3e-3, 3.5e-3, 4e-4, 5e-3, 5e-3, 6e-4]])
    return mesh, PowerMap(boxes, traces, times)


def write_demo(outdir) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    mesh, pmap = demo_case()
    write_mesh(mesh, outdir / "mesh.tet")
    write_powermap(pmap, outdir / "power.pmap")
    cfg = outdir / "demo.cfg"
    cfg.write_text(DEMO_CONFIG, encoding="utf-8")
    return cfg
