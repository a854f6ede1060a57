"""Command-line front end: ``podgp <command> --config run.cfg``.

Commands: dns, train, infer, predict, error, bench, demo.
Exit codes: 0 ok, 2 config error, 3 input validation error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import demo
from .config import Config, load_config, load_trace
from .dns import dns_simulate
from .ensemble import ChipAssembly, HSBInstance, HSBModel, Trace, assemble_field, run_ensemble
from .errors import ConfigError, PodgpError
from .galerkin import (ReducedSystem, calc_C, calc_G, calc_P, load_system, source_vectors,
                       write_system)
from .mesh import compute_jacobians, find_boundary_facets, load_mesh
from .ode import (load_trajectory, rk4_integrate, stability_limit, time_grid,
                  write_trajectory)
from .pod import calc_A, energy_fraction, get_modes, load_basis, write_basis
from .quadrature import cell_quadrature, quad_rule
from .reconstruct import Region, ls_error, max_abs_error, predict_thermal
from .snapshots import (SnapshotSeries, load_powermap, load_snapshots, subtract_ambient,
                        write_snapshots)


class Stage(contextlib.AbstractContextManager):
    """Prefix errors raised inside a pipeline stage with the stage name."""

    def __init__(self, name):
        self.name = name

    def __exit__(self, exc_type, exc, tb):
        if isinstance(exc, PodgpError) and not str(exc).startswith(self.name):
            exc.args = (f"{self.name}: {exc.args[0]}",) + exc.args[1:]
        return False


def _fe(cfg: Config, key="mesh"):
    mesh = load_mesh(cfg.require(key))
    cache = compute_jacobians(mesh)
    rule = quad_rule(cfg.get("quad_degree"))
    return mesh, cache, rule


def _outpath(p):
    Path(p).parent.mkdir(parents=True, exist_ok=True)
    return p


def cmd_dns(cfg: Config, out=print):
    mesh = load_mesh(cfg.require("mesh"))
    pmap = load_powermap(cfg.require("powermap"))
    with Stage("dns"):
        series = dns_simulate(mesh, cfg.material_field(), cfg.boundary(), pmap,
                              cfg.require("t_amb"), cfg.require("dns_dt"),
                              cfg.require("dns_steps"), cfg.get("dns_substeps"),
                              cfg.get("dns_extrapolate"), quad_rule(cfg.get("quad_degree")))
    write_snapshots(series, _outpath(cfg.require("snapshots")))
    out(f"dns: wrote {series.n_t} snapshots x {series.n_dof} DoF to {cfg.require('snapshots')}")
    out(f"dns: peak rise {np.max(series.fields - series.t_amb):.6g} K")


def _train_inputs(cfg):
    mesh, cache, rule = _fe(cfg)
    with Stage("load snapshots"):
        series = load_snapshots(cfg.require("snapshots"), mesh)
    pmap = load_powermap(cfg.require("powermap"))
    return mesh, cache, rule, series, pmap


def cmd_train(cfg: Config, out=print):
    mesh, cache, rule, series, pmap = _train_inputs(cfg)
    mat, bc = cfg.material_field(), cfg.boundary()
    bfacets = find_boundary_facets(mesh)
    rise = subtract_ambient(series)
    quad = cell_quadrature(mesh, cache, rule)
    with Stage("calc_A"):
        a = calc_A(rise, mesh, cache, rule, quad)
    with Stage("get_modes"):
        basis = get_modes(a, rise, cfg.require("modes"), mesh, cache, rule, quad)
    with Stage("calc_C"):
        c = calc_C(basis, mesh, cache, rule, mat, quad)
    with Stage("calc_G"):
        g = calc_G(basis, mesh, cache, rule, mat, bfacets, bc)
    with Stage("calc_P"):
        p, times = calc_P(basis, mesh, cache, rule, pmap, bc, bfacets, series.t_amb, quad)
    system = ReducedSystem(c, g, p, times, bc)
    write_basis(basis, _outpath(cfg.require("basis")))
    write_system(system, _outpath(cfg.require("system")))
    out("train: eigenvalue spectrum")
    for k, lam in enumerate(basis.eigvals, 1):
        out(f"  mode {k:3d}  lambda = {lam:.6e}  ({lam / basis.total_energy:.3e} of energy)")
    out(f"train: energy fraction captured by {basis.d} modes = {energy_fraction(basis):.10f}")
    out(f"train: RK4 stability estimate dt < {stability_limit(system):.6g} s")
    return basis, system


def _build_assembly(cfg: Config) -> ChipAssembly:
    chip = load_mesh(cfg.require("chip_mesh"))
    models = {}
    for mid, row in cfg.models.items():
        with Stage(f"model {mid}"):
            basis = load_basis(row.basis)
            system = load_system(row.system)
            mesh = load_mesh(row.mesh)
            cache = compute_jacobians(mesh)
            rule = quad_rule(cfg.get("quad_degree"))
            src = source_vectors(basis, mesh, cache, rule, load_powermap(row.source)).sum(axis=0)
            models[mid] = HSBModel(basis, system, mesh, src)
    traces = {}
    instances = []
    for name, row in cfg.instances.items():
        key = str(row.trace)
        if key not in traces:
            traces[key] = Trace(*load_trace(row.trace))
        instances.append(HSBInstance(name, row.model_id, row.placement, key))
    return ChipAssembly(chip, instances, models, traces, t_amb=cfg.get("t_amb", 0.0))


def cmd_infer(cfg: Config, out=print):
    dt = cfg.require("dt")
    if cfg.is_ensemble:
        asm = _build_assembly(cfg)
        limit = min(stability_limit(m.system) for m in asm.models.values())
        out(f"infer: RK4 stability estimate dt < {limit:.6g} s (most restrictive model)")
        workers = cfg.get("threads") or None
        with Stage("infer"):
            trajs = run_ensemble(asm, cfg.require("t0"), cfg.require("t1"), dt, workers)
        outdir = Path(cfg.require("trajectory_dir"))
        outdir.mkdir(parents=True, exist_ok=True)
        for name, traj in trajs.items():
            write_trajectory(traj, outdir / f"{name}.podb")
        out(f"infer: wrote {len(trajs)} trajectories to {outdir}")
        return trajs
    system = load_system(cfg.require("system"))
    limit = stability_limit(system)
    out(f"infer: RK4 stability estimate dt < {limit:.6g} s")
    t0 = cfg.get("t0", float(system.p_times[0]))
    t1 = cfg.get("t1", float(system.p_times[-1]))
    with Stage("infer"):
        traj = rk4_integrate(system, np.zeros(system.d), t0, t1, dt)
    write_trajectory(traj, _outpath(cfg.require("trajectory")))
    out(f"infer: wrote {len(traj.times)} x {traj.d} coefficients to {cfg.require('trajectory')}")
    return traj


def cmd_predict(cfg: Config, out=print):
    t_amb = cfg.get("t_amb")
    if cfg.is_ensemble:
        asm = _build_assembly(cfg)
        outdir = Path(cfg.require("trajectory_dir"))
        trajs = {i.name: load_trajectory(outdir / f"{i.name}.podb") for i in asm.instances}
        t0, t1 = cfg.require("t0"), cfg.require("t1")
        times = time_grid(t0, t1, cfg.get("output_dt", cfg.require("dt")))
        base = 0.0 if t_amb is None else t_amb
        fields = np.stack([assemble_field(asm, trajs, t) for t in times]) + base
        series = SnapshotSeries(times, fields, base)
    else:
        traj = load_trajectory(cfg.require("trajectory"))
        basis = load_basis(cfg.require("basis"))
        if t_amb is None:
            t_amb = load_snapshots(cfg.require("snapshots")).t_amb
        with Stage("predict_thermal"):
            series = predict_thermal(traj, basis, t_amb)
    write_snapshots(series, _outpath(cfg.require("prediction")))
    out(f"predict: wrote {series.n_t} fields to {cfg.require('prediction')}")
    return series


def _write_report(rows, path, out):
    with open(_outpath(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode_count", "region", "err", "max_abs_err"])
        writer.writerows(rows)
    for row in rows:
        out(f"error: modes={row[0]} region={row[1]} err={row[2]} max_abs_err={row[3]}")


def cmd_error(cfg: Config, out=print):
    mesh, cache, rule = _fe(cfg)
    truth = load_snapshots(cfg.require("snapshots"), mesh)
    region = cfg.get("region", Region())
    quad = cell_quadrature(mesh, cache, rule)
    rows = []
    sweep = cfg.get("error_modes")
    if sweep:
        basis = load_basis(cfg.require("basis"))
        system = load_system(cfg.require("system"))
        dt = cfg.require("dt")
        for d in (int(x) for x in sweep.split()):
            with Stage(f"error sweep d={d}"):
                traj = rk4_integrate(system.truncate(d), np.zeros(d), float(truth.times[0]),
                                     float(truth.times[-1]), dt)
                pred = predict_thermal(traj, basis.truncate(d), truth.t_amb)
                err = ls_error(pred, truth, mesh, cache, rule, region, quad)
            rows.append([d, str(region), repr(err), repr(max_abs_error(pred, truth, mesh, region))])
    else:
        pred = load_snapshots(cfg.require("prediction"), mesh)
        modes = cfg.get("modes")
        if modes is None and cfg.get("basis") is not None:
            modes = load_basis(cfg.get("basis")).d
        with Stage("ls_error"):
            err = ls_error(pred, truth, mesh, cache, rule, region, quad)
        rows.append([modes if modes is not None else "", str(region), repr(err),
                     repr(max_abs_error(pred, truth, mesh, region))])
    _write_report(rows, cfg.require("report"), out)
    return rows


BENCH_STAGES = ("calc_A", "calc_C", "calc_G", "calc_P", "infer")


def cmd_bench(cfg: Config, out=print):
    mesh, cache, rule, series, pmap = _train_inputs(cfg)
    mat, bc = cfg.material_field(), cfg.boundary()
    bfacets = find_boundary_facets(mesh)
    rise = subtract_ambient(series)
    quad = cell_quadrature(mesh, cache, rule)
    d = cfg.require("modes")
    repeats = max(1, cfg.get("bench_repeats"))
    a = calc_A(rise, mesh, cache, rule, quad)
    basis = get_modes(a, rise, d, mesh, cache, rule, quad)
    p, times = calc_P(basis, mesh, cache, rule, pmap, bc, bfacets, series.t_amb, quad)
    system = ReducedSystem(calc_C(basis, mesh, cache, rule, mat, quad),
                           calc_G(basis, mesh, cache, rule, mat, bfacets, bc), p, times, bc)
    dt = cfg.get("dt") or 0.5 * stability_limit(system)
    jobs = {
        "calc_A": lambda: calc_A(rise, mesh, cache, rule, quad),
        "calc_C": lambda: calc_C(basis, mesh, cache, rule, mat, quad),
        "calc_G": lambda: calc_G(basis, mesh, cache, rule, mat, bfacets, bc),
        "calc_P": lambda: calc_P(basis, mesh, cache, rule, pmap, bc, bfacets, series.t_amb, quad),
        "infer": lambda: rk4_integrate(system, np.zeros(d), float(times[0]), float(times[-1]), dt),
    }
    rows = []
    for stage in BENCH_STAGES:
        samples = []
        for _ in range(repeats):
            start = time.perf_counter()
            jobs[stage]()
            samples.append(time.perf_counter() - start)
        rows.append([stage, repr(float(np.median(samples))), repr(min(samples)), repeats])
        out(f"bench: {stage:7s} median {np.median(samples):.4e} s over {repeats} runs")
    with open(_outpath(cfg.require("bench")), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "median_s", "min_s", "repeats"])
        writer.writerows(rows)
    return rows


COMMANDS = {
    "dns": cmd_dns,
    "train": cmd_train,
    "infer": cmd_infer,
    "predict": cmd_predict,
    "error": cmd_error,
    "bench": cmd_bench,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="podgp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--print-config", action="store_true",
                       help="print the normalized config and exit")
        p.add_argument("--threads", type=int, default=None, help="worker threads (0 = auto)")
    p = sub.add_parser("demo", help="write a small demo case (mesh, power map, config)")
    p.add_argument("--out", required=True, type=Path)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "demo":
            path = demo.write_demo(args.out)
            print(f"demo: wrote {path}")
            return 0
        cfg = load_config(args.config)
        if args.threads is not None:
            if args.threads < 0:
                raise ConfigError("--threads must be >= 0")
            cfg.values["threads"] = args.threads
        if args.print_config:
            sys.stdout.write(cfg.emit())
            return 0
        limit = _thread_limit(cfg.get("threads"))
        with limit:
            COMMANDS[args.command](cfg)
    except PodgpError as exc:
        print(f"podgp {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def _thread_limit(threads):
    if not threads:
        return contextlib.nullcontext()
    return threadpool_limits(limits=threads)


if __name__ == "__main__":
    sys.exit(main())
