"""Steady incompressible potential flow on the unit cell and the waveguide.

Both solvers share the same structure: a Laplace problem for the potential
with Neumann through-flow data, a zero-mean constraint, and nodal velocity
recovery by volume-weighted cell-gradient averaging.  Flux bookkeeping uses
variationally consistent (residual-based) boundary fluxes, which satisfy
discrete conservation to solver precision; pointwise surface integrals of
the recovered nodal field only conserve up to discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .duct_mesh import GROUP_IN, GROUP_OUT, GROUP_IFACE_PLUS, interface_nodes
from .fem import FluidProperties, SolverError


class FlowError(RuntimeError):
    pass


@dataclass
class FlowField:
    """Nodal advection velocity and its potential on a mesh."""

    mesh: object
    velocity: np.ndarray
    potential: np.ndarray
    properties: FluidProperties = field(default_factory=FluidProperties)

    def max_speed(self) -> float:
        return float(np.linalg.norm(self.velocity, axis=1).max(initial=0.0))

    @property
    def mach_bound_ok(self) -> bool:
        """True when tau * |w|_inf^2 < c^2 holds for the nodal field."""
        return self.max_speed() < self.properties.mach_speed_limit

    def scaled(self, factor):
        return FlowField(self.mesh, factor * self.velocity,
                         factor * self.potential, self.properties)


def uniform_flow(mesh, w_vec, properties=None):
    """Constant nodal velocity field (test fixture)."""
    props = properties or FluidProperties()
    w_vec = np.asarray(w_vec, dtype=float)
    if w_vec.shape != (mesh.dim,):
        raise FlowError(f"velocity vector must have {mesh.dim} components")
    vel = np.tile(w_vec, (mesh.num_nodes, 1))
    pot = -mesh.nodes @ w_vec
    return FlowField(mesh, vel, pot, props)


def _recover_velocity(mesh, potential):
    """Nodal w = -grad(potential), averaged across periodic identifications."""
    g = fem.cell_gradients(mesh, potential)
    _, vols = fem.p1_geometry(mesh)
    num = np.zeros((mesh.num_nodes, mesh.dim))
    den = np.zeros(mesh.num_nodes)
    idx = mesh.cells.reshape(-1)
    np.add.at(num, idx, np.repeat(-g * vols[:, None], mesh.dim + 1, axis=0))
    np.add.at(den, idx, np.repeat(vols, mesh.dim + 1))
    if mesh.periodic_pairs:
        T = fem.periodic_reduction(mesh)
        num = T @ (T.T @ num)
        den = T @ (T.T @ den)
    return num / den[:, None]


def solve_cell_potential_flow(mesh, u3, properties=None, residual_tol=1e-10):
    """Xi-periodic cell flow driven by transverse speed u3 through I+/I-.

    The potential solves a pure-Neumann Laplace problem with w.n = +u3 on
    I+ and -u3 on I- (net upward through-flow) and impermeable plate walls.
    """
    props = properties or FluidProperties()
    if not np.isfinite(u3):
        raise FlowError("u3 must be finite")
    if u3 == 0.0:
        zero = np.zeros(mesh.num_nodes)
        return FlowField(mesh, np.zeros((mesh.num_nodes, 3)), zero, props)
    system = fem.assemble(mesh, [fem.GradGrad(1.0)])
    system.rhs = -u3 * (fem.boundary_load_vector(mesh, "I+")
                        - fem.boundary_load_vector(mesh, "I-"))
    pot = fem.solve(system, constraint="zero_mean", residual_tol=residual_tol)
    vel = _recover_velocity(mesh, pot)
    return FlowField(mesh, vel, pot, props)


def boundary_flux(flow, group):
    """Consistent outward flux of w through a facet group.

    Computed from the stiffness residual of the potential (the discrete
    weak flux), folded across periodic identifications.
    """
    mesh = flow.mesh
    r = fem.stiffness_matrix(mesh) @ flow.potential
    if mesh.periodic_pairs:
        T = fem.periodic_reduction(mesh)
        red_of = np.asarray(T.tocsr().indices)
        rr = T.T @ r
    else:
        red_of = np.arange(mesh.num_nodes)
        rr = r
    red = np.unique(red_of[mesh.group_nodes(group)])
    return -float(rr[red].sum())


# -- waveguide ---------------------------------------------------------------

@dataclass
class MacroFlowField:
    """Mean flow in the waveguide plus the transverse profile on the interface."""

    mesh: object
    velocity: np.ndarray
    potential: np.ndarray
    u_in: float
    interface_x: np.ndarray
    interface_u3: np.ndarray
    properties: FluidProperties = field(default_factory=FluidProperties)

    def max_speed(self) -> float:
        return float(np.linalg.norm(self.velocity, axis=1).max(initial=0.0))

    @property
    def mach_bound_ok(self) -> bool:
        return self.max_speed() < self.properties.mach_speed_limit

    def element_u3(self):
        """Per-interface-element transverse speed (endpoint averages)."""
        return 0.5 * (self.interface_u3[:-1] + self.interface_u3[1:])


def _interface_profile(mesh, potential):
    """Consistent transverse velocity on the interface from the upper side."""
    minus, plus, x = interface_nodes(mesh)
    cen = mesh.nodes[mesh.cells].mean(axis=1)
    s = mesh.nodes[minus[0], 1]
    upper = np.nonzero(cen[:, 1] > s)[0]
    grads, vols = fem.p1_geometry(mesh)
    vals = potential[mesh.cells[upper]]
    g = np.einsum('mi,mid->md', vals, grads[upper])
    r = np.zeros(mesh.num_nodes)
    contrib = np.einsum('m,mid,md->mi', vols[upper], grads[upper], g)
    np.add.at(r, mesh.cells[upper].reshape(-1), contrib.reshape(-1))
    lump = fem.boundary_load_vector(mesh, GROUP_IFACE_PLUS)
    u3 = r[plus] / lump[plus]
    return x, u3, float(r[plus].sum())


def solve_macro_potential_flow(mesh, u_in, properties=None, residual_tol=1e-10):
    """Potential flow through the waveguide with a transparent interface.

    Neumann data: inflow speed u_in on Gamma_in, outflow u_in on Gamma_out,
    impermeable walls.  The doubled interface nodes are identified, so the
    plate offers no resistance; its effect enters only through the acoustic
    coefficients evaluated at the resulting interface profile.
    """
    props = properties or FluidProperties()
    if u_in == 0.0:
        minus, plus, x = interface_nodes(mesh)
        zero = np.zeros(mesh.num_nodes)
        return MacroFlowField(mesh, np.zeros((mesh.num_nodes, 2)), zero, 0.0,
                              x, np.zeros(len(x)), props)
    area_in = mesh.group_measure(GROUP_IN)
    area_out = mesh.group_measure(GROUP_OUT)
    defect = abs(area_in - area_out) * abs(u_in)
    if defect > 1e-10 * max(abs(u_in) * area_in, 1e-300):
        raise FlowError(
            f"incompatible inlet/outlet flux: |Gamma_in|={area_in:.6g} "
            f"vs |Gamma_out|={area_out:.6g}")
    system = fem.assemble(mesh, [fem.GradGrad(1.0)])
    system.rhs = u_in * (fem.boundary_load_vector(mesh, GROUP_IN)
                         - fem.boundary_load_vector(mesh, GROUP_OUT))
    pot = fem.solve(system, constraint="zero_mean", residual_tol=residual_tol)
    vel = _recover_velocity(mesh, pot)
    x, u3, total = _interface_profile(mesh, pot)
    return MacroFlowField(mesh, vel, pot, u_in, x, u3, props)


def uniform_macro_flow(mesh, axial_speed, properties=None):
    """Constant axial mean flow (test fixture); zero transverse profile."""
    props = properties or FluidProperties()
    minus, plus, x = interface_nodes(mesh)
    vel = np.zeros((mesh.num_nodes, 2))
    vel[:, 0] = axial_speed
    pot = -axial_speed * mesh.nodes[:, 0]
    return MacroFlowField(mesh, vel, pot, axial_speed, x, np.zeros(len(x)), props)
