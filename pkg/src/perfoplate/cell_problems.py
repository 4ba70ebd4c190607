"""Corrector problems on the unit-cell fluid domain.

The flow-modified operator pairs gradients minus a scaled advective
derivative; all three corrector problems share its factorization.  All
forms are cell-averaged (normalized by the in-plane cell area), and all
correctors are real, zero-mean and periodic in the in-plane directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .fem import FluidProperties, SolverError
from .flow import FlowField


class MachBoundError(RuntimeError):
    """Advection too fast for the flow-modified operator to stay coercive."""


class CellOperator:
    """Assembled flow-modified cell operator with a shared factorization.

    The matrix is real symmetric and positive semidefinite with the
    constants as nullspace whenever the advection satisfies the speed
    bound; the bound is enforced on the nodal velocity field, which
    dominates the quadrature values by convexity.
    """

    def __init__(self, mesh, flow: FlowField, properties: FluidProperties | None = None,
                 residual_tol: float = 1e-10):
        props = properties or flow.properties
        speed = flow.max_speed()
        if speed >= props.mach_speed_limit:
            raise MachBoundError(
                f"max |w| = {speed:.6g} m/s reaches the coercivity bound "
                f"c/sqrt(tau) = {props.mach_speed_limit:.6g} m/s")
        self.mesh = mesh
        self.flow = flow
        self.properties = props
        self.residual_tol = residual_tol
        self.xi = fem.xi_measure(mesh)
        self.stiffness = fem.stiffness_matrix(mesh)
        if speed > 0.0:
            self.advection, _ = fem.advection_matrices(mesh, flow.velocity)
        else:
            self.advection = sp.csr_matrix(self.stiffness.shape)
        self.matrix = (self.stiffness
                       - (props.tau / props.c ** 2) * self.advection) / self.xi
        self.reduction = fem.periodic_reduction(mesh)
        T = self.reduction
        self._mean = (T.T @ fem.lumped_volume_vector(mesh)) / self.xi
        reduced = (T.T @ self.matrix @ T).tocsr()
        n = reduced.shape[0]
        aug = sp.bmat([[reduced, self._mean.reshape(-1, 1)],
                       [self._mean.reshape(1, -1), None]], format='csc')
        self._reduced = reduced
        self._lu = spla.splu(aug)
        self._n_reduced = n
        # absolute scale below which a right side counts as identically zero
        self._zero_floor = 1e-13 * abs(reduced).max() * np.sqrt(n)

    def solve(self, rhs_full):
        """Zero-mean periodic solution of (operator) u = rhs.

        The right side must be compatible (orthogonal to constants) within
        1e-10 relative; this holds identically for the corrector loads and
        is asserted, not fixed up.
        """
        rhs = self.reduction.T @ np.asarray(rhs_full, dtype=float)
        norm = np.linalg.norm(rhs)
        if norm <= self._zero_floor:
            return np.zeros(self.mesh.num_nodes)
        defect = abs(rhs.sum())
        if defect / norm > 1e-10:
            raise SolverError(
                f"corrector right side incompatible: defect {defect / norm:.3e}")
        scale = norm
        aug_rhs = np.concatenate([rhs, [0.0]])
        x = self._lu.solve(aug_rhs)
        resid = np.linalg.norm(self._reduced @ x[:-1] + self._mean * x[-1] - rhs)
        if not np.isfinite(resid) or resid / scale > self.residual_tol:
            raise SolverError(f"cell solve residual {resid / scale:.3e} exceeds "
                              f"{self.residual_tol:.1e}")
        return self.reduction @ x[:-1]

    def apply(self, u):
        return self.matrix @ np.asarray(u, dtype=float)

    def pair(self, u, v):
        """Cell-averaged operator pairing of two full nodal fields."""
        return float(np.asarray(u) @ (self.matrix @ np.asarray(v)))


def assemble_Aw(mesh, flow, properties=None, residual_tol=1e-10) -> CellOperator:
    """Build the flow-modified cell operator (with the coercivity guard)."""
    return CellOperator(mesh, flow, properties, residual_tol)


def tangential_load(op: CellOperator, beta: int):
    """Right side of the in-plane corrector problem (beta = 1 or 2)."""
    if beta not in (1, 2):
        raise ValueError("beta must be 1 or 2")
    y = op.mesh.nodes[:, beta - 1]
    return -(op.matrix @ y)


def transverse_load(op: CellOperator):
    """Right side of the through-flux corrector: minus the face-average jump."""
    lp = fem.boundary_load_vector(op.mesh, "I+")
    lm = fem.boundary_load_vector(op.mesh, "I-")
    return -(lp - lm) / op.xi


def advective_load(op: CellOperator):
    """Right side of the flow-pressure corrector."""
    props = op.properties
    grads, vols = fem.p1_geometry(op.mesh)
    wmean = op.flow.velocity[op.mesh.cells].mean(axis=1)
    contrib = np.einsum('m,md,mid->mi', vols, wmean, grads)
    out = np.zeros(op.mesh.num_nodes)
    np.add.at(out, op.mesh.cells.reshape(-1), contrib.reshape(-1))
    return (props.theta / props.c ** 2) * out / op.xi


def solve_pi_beta(op: CellOperator, beta: int):
    return op.solve(tangential_load(op, beta))


def solve_xi(op: CellOperator):
    return op.solve(transverse_load(op))


def solve_pi_P(op: CellOperator):
    if op.flow.max_speed() == 0.0:
        return np.zeros(op.mesh.num_nodes)
    return op.solve(advective_load(op))


@dataclass
class CellSolutionSet:
    """The corrector fields of one cell instance (full nodal, zero-mean)."""

    pi1: np.ndarray
    pi2: np.ndarray
    xi: np.ndarray
    pi_P: np.ndarray
    flow: FlowField
    properties: FluidProperties
    operator: CellOperator | None = field(default=None, repr=False)


def solve_cell_problems(mesh, flow, properties=None, residual_tol=1e-10) -> CellSolutionSet:
    """Solve all correctors of one cell with a single factorization."""
    op = assemble_Aw(mesh, flow, properties, residual_tol)
    return CellSolutionSet(
        pi1=solve_pi_beta(op, 1),
        pi2=solve_pi_beta(op, 2),
        xi=solve_xi(op),
        pi_P=solve_pi_P(op),
        flow=flow,
        properties=op.properties,
        operator=op,
    )


def export_solution_fields(mesh, sols: CellSolutionSet):
    """Mesh copy with the corrector fields attached for file export."""
    return mesh.with_fields(pi1=sols.pi1, pi2=sols.pi2, xi=sols.xi, pi_P=sols.pi_P)
