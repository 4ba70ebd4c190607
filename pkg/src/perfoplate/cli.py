"""Batch command-line front-end.

Commands: mesh-cell, mesh-duct, cell, sweep, waveguide.  Every command
writes its declared outputs plus the effective configuration echo into the
output directory; failures leave a machine-readable error record and a
nonzero exit code.  Outputs are deterministic for identical inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import coefficients as coefmod
from .cell_mesh import generate_unit_cell_mesh
from .cell_problems import export_solution_fields
from .coefficients import (CSV_HEADER, cell_pipeline, rows_to_csv,
                           sweep_coefficients, verify_symmetries)
from .duct_mesh import generate_waveguide_mesh
from .mesh import save_mesh
from .pipeline import setup_waveguide_run, tl_curve
from .waveguide import solve_frequency

JOBS_ENV_VAR = "PERFOPLATE_JOBS"


def _num(v):
    return format(float(v), ".17g")


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")


def _echo_config(cfg, out: Path):
    _write(out / "effective_config.ini", cfgmod.render_config(cfg))


def cmd_mesh_cell(cfg, out: Path):
    mesh = generate_unit_cell_mesh(cfg.cell_geometry(), cfg["cell.resolution"])
    save_mesh(mesh, out / "cell.msh")
    return ["cell.msh"]


def cmd_mesh_duct(cfg, out: Path):
    mesh = generate_waveguide_mesh(cfg.waveguide_geometry(),
                                   cfg["waveguide.resolution"])
    save_mesh(mesh, out / "duct.msh")
    return ["duct.msh"]


def cmd_cell(cfg, out: Path):
    props = cfg.fluid_properties()
    geom = cfg.cell_geometry()
    u3 = cfg["flow.u3"]
    mesh, flw, sols, coeffs = cell_pipeline(
        geom, u3, cfg["cell.resolution"], props,
        residual_tol=cfg["run.residual_tol"])
    save_mesh(export_solution_fields(mesh, sols), out / "correctors.msh")
    report = verify_symmetries(coeffs, properties=props,
                               speed_scale=max(flw.max_speed(), abs(u3)))
    rows = [coeffs.as_row(geom.hole_slope_deg, u3, report.max_defect)]
    _write(out / "coefficients.csv", rows_to_csv(rows))
    _write(out / "symmetry_report.txt", str(report) + "\n")
    return ["correctors.msh", "coefficients.csv", "symmetry_report.txt"]


def cmd_sweep(cfg, out: Path, jobs=1):
    props = cfg.fluid_properties()
    rows, failures = sweep_coefficients(
        cfg.cell_geometry(), cfg.sweep_phis(), cfg.sweep_u3(),
        cfg["cell.resolution"], props, jobs=jobs)
    _write(out / "coefficients.csv", rows_to_csv(rows))
    written = ["coefficients.csv"]
    if failures:
        lines = ["phi_deg,U3,error"]
        lines += [f"{_num(p)},{_num(u)},{e.replace(',', ';')}"
                  for p, u, e in failures]
        _write(out / "failures.csv", "\n".join(lines) + "\n")
        written.append("failures.csv")
    return written


def cmd_waveguide(cfg, out: Path):
    props = cfg.fluid_properties()
    run = setup_waveguide_run(
        cfg.waveguide_geometry(), cfg.cell_geometry(), props,
        u_in=cfg["flow.u_in"], flow_mode=cfg["flow.mode"],
        duct_resolution=cfg["waveguide.resolution"],
        cell_resolution=cfg["cell.resolution"],
        quantum=cfg["flow.u3_quantum"],
        amplitude=cfg["acoustics.amplitude"],
        outer_advection=cfg["acoustics.outer_advection"],
        impedance_flow_correction=cfg["acoustics.impedance_flow_correction"],
        source_side=cfg["acoustics.source_side"],
        residual_tol=cfg["run.residual_tol"])
    freqs = cfg.frequencies_hz()
    rows, failures = tl_curve(run, freqs)
    lines = ["omega_rad_s,freq_hz,TL_db,flux_in,flux_out"]
    lines += [",".join(_num(v) for v in row) for row in rows]
    _write(out / "tl.csv", "\n".join(lines) + "\n")

    idx = run.problem.index
    u3_lines = ["arc_length,U3"]
    if run.flow is not None:
        arc = run.flow.interface_x - run.flow.interface_x[0]
        u3_lines += [f"{_num(a)},{_num(u)}"
                     for a, u in zip(arc, run.flow.interface_u3)]
    else:
        arc = idx.x - idx.x[0]
        u3_lines += [f"{_num(a)},0" for a in arc]
    _write(out / "interface_u3.csv", "\n".join(u3_lines) + "\n")

    written = ["tl.csv", "interface_u3.csv"]
    if rows:
        mid = rows[len(rows) // 2]
        sol = solve_frequency(run.problem, mid[0])
        snap = run.mesh.with_fields(
            pressure_re=sol.P.real, pressure_im=sol.P.imag,
            pressure_abs=np.abs(sol.P))
        save_mesh(snap, out / "pressure.msh")
        written.append("pressure.msh")
    if failures:
        lines = ["omega_rad_s,error"]
        lines += [f"{_num(w)},{e.replace(',', ';')}" for w, e in failures]
        _write(out / "failures.csv", "\n".join(lines) + "\n")
        written.append("failures.csv")
    return written


COMMANDS = {
    "mesh-cell": cmd_mesh_cell,
    "mesh-duct": cmd_mesh_duct,
    "cell": cmd_cell,
    "sweep": cmd_sweep,
    "waveguide": cmd_waveguide,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="perfoplate",
        description="Homogenized acoustic transmission through perforated "
                    "plates in steady flow")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--jobs", type=int, default=None,
                        help=f"worker processes (default: ${JOBS_ENV_VAR} or 1)")
    parser.add_argument("--tol", type=float, default=None,
                        help="override solver residual tolerance")
    return parser


def resolve_jobs(arg_jobs, cfg):
    if arg_jobs is not None:
        return max(1, arg_jobs)
    env = os.environ.get(JOBS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise cfgmod.ConfigError(
                f"environment variable {JOBS_ENV_VAR}={env!r} is not an integer")
    return max(1, cfg["run.jobs"])


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        cfg = cfgmod.load_config(args.config) if args.config \
            else cfgmod.default_config()
        if args.tol is not None:
            cfg.values["run"]["residual_tol"] = args.tol
        jobs = resolve_jobs(args.jobs, cfg)
        _echo_config(cfg, out)
        if args.command == "sweep":
            written = cmd_sweep(cfg, out, jobs=jobs)
        else:
            written = COMMANDS[args.command](cfg, out)
    except Exception as exc:
        record = {"command": args.command, "error": type(exc).__name__,
                  "message": str(exc)}
        _write(out / "error.json", json.dumps(record, indent=2) + "\n")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name in ["effective_config.ini"] + written:
        print(out / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
