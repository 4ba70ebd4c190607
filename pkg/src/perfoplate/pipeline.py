"""End-to-end orchestration: mean flow, per-element cell problems, TL sweep.

The interface coefficients vary along the plate because the through-flow
profile does.  Cell problems are solved once per distinct quantized
through-speed and shared by all interface elements that round to it, which
bounds the number of 3D solves regardless of the macro resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cell_mesh import generate_unit_cell_mesh
from .cell_problems import solve_cell_problems
from .coefficients import compute_coefficients, verify_symmetries
from .fem import FluidProperties
from .flow import solve_cell_potential_flow, solve_macro_potential_flow, uniform_macro_flow
from .geometry import CellGeometry, WaveguideGeometry
from .duct_mesh import generate_waveguide_mesh
from .waveguide import MacroProblem, frequency_sweep


@dataclass
class InterfaceCoefficientTable:
    """Per-element coefficients plus the distinct cell solves behind them."""

    element_u3: np.ndarray
    quantized_u3: np.ndarray
    coefficients: list
    by_speed: dict = field(default_factory=dict)


def quantize_speeds(values, quantum):
    """Round speeds to multiples of the quantum (0 keeps exact values)."""
    values = np.asarray(values, dtype=float)
    if quantum <= 0:
        return values.copy()
    return np.round(values / quantum) * quantum


def build_interface_coefficients(cell_geom: CellGeometry, element_u3,
                                 resolution=0.08, properties=None,
                                 quantum=0.25, residual_tol=1e-10,
                                 cell_mesh=None) -> InterfaceCoefficientTable:
    """Solve cell problems for each distinct quantized through-speed."""
    props = properties or FluidProperties()
    element_u3 = np.asarray(element_u3, dtype=float)
    q = quantize_speeds(element_u3, quantum)
    mesh = cell_mesh if cell_mesh is not None else \
        generate_unit_cell_mesh(cell_geom, resolution)
    by_speed = {}
    for u3 in sorted(set(q.tolist())):
        flw = solve_cell_potential_flow(mesh, u3, props, residual_tol)
        sols = solve_cell_problems(mesh, flw, props, residual_tol)
        prov = dict(phi_deg=cell_geom.hole_slope_deg, u3=u3)
        by_speed[u3] = compute_coefficients(mesh, flw, sols, props, prov)
    coeffs = [by_speed[u3] for u3 in q]
    return InterfaceCoefficientTable(element_u3, q, coeffs, by_speed)


def macro_flow_for_mode(mesh, mode, u_in, properties):
    """Mean-flow field per the configured mode: none, uniform or potential."""
    if mode == "none" or u_in == 0.0:
        return None
    if mode == "uniform":
        return uniform_macro_flow(mesh, u_in, properties)
    if mode == "potential":
        return solve_macro_potential_flow(mesh, u_in, properties)
    raise ValueError(f"unknown flow mode {mode!r}")


@dataclass
class WaveguideRun:
    """Assembled inputs of one TL computation."""

    mesh: object
    problem: MacroProblem
    flow: object
    table: InterfaceCoefficientTable


def setup_waveguide_run(duct_geom: WaveguideGeometry, cell_geom: CellGeometry,
                        properties=None, u_in=0.0, flow_mode="potential",
                        duct_resolution=0.0125, cell_resolution=0.08,
                        quantum=0.25, amplitude=300.0, outer_advection=True,
                        impedance_flow_correction=False, source_side="in",
                        residual_tol=1e-10, duct_mesh=None,
                        cell_mesh=None) -> WaveguideRun:
    """Build the macro problem with flow-dependent interface coefficients."""
    props = properties or FluidProperties()
    mesh = duct_mesh if duct_mesh is not None else \
        generate_waveguide_mesh(duct_geom, duct_resolution)
    mf = macro_flow_for_mode(mesh, flow_mode, u_in, props)
    n_elem = len(mesh.periodic_pairs["iface"]) - 1
    if mf is None:
        element_u3 = np.zeros(n_elem)
    else:
        element_u3 = mf.element_u3()
    table = build_interface_coefficients(
        cell_geom, element_u3, cell_resolution, props, quantum, residual_tol,
        cell_mesh=cell_mesh)
    problem = MacroProblem(
        mesh, props, table.coefficients, eps0=cell_geom.eps0, flow=mf,
        amplitude=amplitude, outer_advection=outer_advection,
        impedance_flow_correction=impedance_flow_correction,
        source_side=source_side, residual_tol=residual_tol)
    return WaveguideRun(mesh, problem, mf, table)


def tl_curve(run: WaveguideRun, frequencies_hz):
    """TL rows over a frequency grid in Hz."""
    omegas = [2.0 * math.pi * f for f in frequencies_hz]
    return frequency_sweep(run.problem, omegas)
