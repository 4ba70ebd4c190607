"""P1 finite-element assembly and sparse direct solution.

Real and complex scalar problems on simplex meshes, with periodic and
zero-mean constraints.  Element gradients are cell-constant; products with
nodal velocity fields are integrated with second-order quadrature, which is
exact for the quadratic integrands that occur here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class AssemblyError(ValueError):
    """Invalid assembly request (missing flow, unknown group, ...)."""


class SolverError(RuntimeError):
    """Sparse solve failed its residual or compatibility contract."""


@dataclass(frozen=True)
class FluidProperties:
    """Acoustic fluid constants; the advection parameter tau fixes theta."""

    rho0: float = 1.55
    c: float = 343.0
    tau: float = 3.0

    def __post_init__(self):
        if self.rho0 <= 0 or self.c <= 0:
            raise ValueError("rho0 and c must be positive")

    @property
    def theta(self) -> float:
        return (1.0 + self.tau) / 2.0

    @property
    def bulk_modulus(self) -> float:
        return self.rho0 * self.c * self.c

    @property
    def compressibility(self) -> float:
        return 1.0 / self.bulk_modulus

    @property
    def mach_speed_limit(self) -> float:
        """Largest advection speed with a coercive flow-modified operator."""
        return self.c / math.sqrt(self.tau) if self.tau > 0 else math.inf


# -- form vocabulary ---------------------------------------------------------

@dataclass(frozen=True)
class GradGrad:
    weight: complex = 1.0


@dataclass(frozen=True)
class Mass:
    weight: complex = 1.0


@dataclass(frozen=True)
class AdvAdv:
    weight: complex = 1.0


@dataclass(frozen=True)
class AdvSkew:
    weight: complex = 1.0


@dataclass(frozen=True)
class BoundaryMass:
    group: str
    weight: complex = 1.0


@dataclass(frozen=True)
class BoundaryAverageLoad:
    """Load ``weight * (1/|group|) * integral_group(test)`` on the rhs."""

    group: str
    weight: complex = 1.0


class LinearSystem:
    """Assembled sparse system plus the constraints it is solved under."""

    def __init__(self, matrix, rhs, mesh, periodic=False):
        self.matrix = matrix.tocsr()
        self.rhs = np.asarray(rhs)
        self.mesh = mesh
        self.periodic = periodic


# -- geometry tables ---------------------------------------------------------

def p1_geometry(mesh):
    """Per-cell shape gradients and measures: (grads (M, n, d), vols (M,))."""
    x = mesh.nodes[mesh.cells]
    e = x[:, 1:, :] - x[:, :1, :]
    if mesh.dim == 2:
        det = e[:, 0, 0] * e[:, 1, 1] - e[:, 0, 1] * e[:, 1, 0]
        vols = 0.5 * det
        inv = np.empty_like(e)
        inv[:, 0, 0] = e[:, 1, 1] / det
        inv[:, 0, 1] = -e[:, 0, 1] / det
        inv[:, 1, 0] = -e[:, 1, 0] / det
        inv[:, 1, 1] = e[:, 0, 0] / det
    else:
        det = np.linalg.det(e)
        vols = det / 6.0
        inv = np.linalg.inv(e)
    grads = np.empty((len(mesh.cells), mesh.dim + 1, mesh.dim))
    grads[:, 1:, :] = np.transpose(inv, (0, 2, 1))
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
    return grads, vols


_QUAD2 = {
    2: (np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
        np.array([1 / 3, 1 / 3, 1 / 3])),
    3: (np.array([
        [0.5854101966249685, 0.1381966011250105, 0.1381966011250105, 0.1381966011250105],
        [0.1381966011250105, 0.5854101966249685, 0.1381966011250105, 0.1381966011250105],
        [0.1381966011250105, 0.1381966011250105, 0.5854101966249685, 0.1381966011250105],
        [0.1381966011250105, 0.1381966011250105, 0.1381966011250105, 0.5854101966249685]]),
        np.array([0.25, 0.25, 0.25, 0.25])),
}

# degree-4 rule on the reference triangle (6 points), for manufactured loads
_TRI_Q4_L = np.array([
    [0.816847572980459, 0.091576213509771, 0.091576213509771],
    [0.091576213509771, 0.816847572980459, 0.091576213509771],
    [0.091576213509771, 0.091576213509771, 0.816847572980459],
    [0.108103018168070, 0.445948490915965, 0.445948490915965],
    [0.445948490915965, 0.108103018168070, 0.445948490915965],
    [0.445948490915965, 0.445948490915965, 0.108103018168070]])
_TRI_Q4_W = np.array([0.109951743655322, 0.109951743655322, 0.109951743655322,
                      0.223381589678011, 0.223381589678011, 0.223381589678011])


def _scatter(mesh, elem, dtype=float):
    n = mesh.dim + 1
    rows = np.repeat(mesh.cells, n, axis=1).reshape(-1)
    cols = np.tile(mesh.cells, (1, n)).reshape(-1)
    mat = sp.coo_matrix((elem.reshape(-1).astype(dtype), (rows, cols)),
                        shape=(mesh.num_nodes, mesh.num_nodes))
    return mat.tocsr()


def stiffness_matrix(mesh):
    grads, vols = p1_geometry(mesh)
    elem = np.einsum('m,mid,mjd->mij', vols, grads, grads)
    return _scatter(mesh, elem)


def mass_matrix(mesh):
    n = mesh.dim + 1
    base = (np.ones((n, n)) + np.eye(n)) / (n * (n + 1))
    _, vols = p1_geometry(mesh)
    elem = vols[:, None, None] * base[None, :, :]
    return _scatter(mesh, elem)


def advection_matrices(mesh, velocity):
    """(W, C): W_ij = int (w.grad phi_i)(w.grad phi_j), C_ij = int phi_i (w.grad phi_j)."""
    velocity = np.asarray(velocity, dtype=float)
    if velocity.shape != (mesh.num_nodes, mesh.dim):
        raise AssemblyError("velocity must be nodal with one vector per mesh node")
    grads, vols = p1_geometry(mesh)
    wn = velocity[mesh.cells]
    lam, wts = _QUAD2[mesh.dim]
    n = mesh.dim + 1
    Welem = np.zeros((mesh.num_cells, n, n))
    Celem = np.zeros((mesh.num_cells, n, n))
    for q in range(len(wts)):
        wq = np.einsum('i,mid->md', lam[q], wn)
        dq = np.einsum('md,mjd->mj', wq, grads)
        scale = wts[q] * vols
        Welem += np.einsum('m,mi,mj->mij', scale, dq, dq)
        Celem += np.einsum('m,i,mj->mij', scale, lam[q], dq)
    return _scatter(mesh, Welem), _scatter(mesh, Celem)


def boundary_mass_matrix(mesh, group):
    facets = mesh.facet_group(group)
    meas = mesh.facet_measures(group)
    n = mesh.dim
    base = (np.ones((n, n)) + np.eye(n)) / (n * (n + 1))
    elem = meas[:, None, None] * base[None, :, :]
    rows = np.repeat(facets, n, axis=1).reshape(-1)
    cols = np.tile(facets, (1, n)).reshape(-1)
    return sp.coo_matrix((elem.reshape(-1), (rows, cols)),
                         shape=(mesh.num_nodes, mesh.num_nodes)).tocsr()


def boundary_load_vector(mesh, group):
    """Vector of int_group phi_i."""
    facets = mesh.facet_group(group)
    meas = mesh.facet_measures(group)
    out = np.zeros(mesh.num_nodes)
    np.add.at(out, facets.reshape(-1),
              np.repeat(meas / mesh.dim, mesh.dim))
    return out


def lumped_volume_vector(mesh):
    """Vector of int phi_i (exact for P1)."""
    _, vols = p1_geometry(mesh)
    out = np.zeros(mesh.num_nodes)
    np.add.at(out, mesh.cells.reshape(-1),
              np.repeat(vols / (mesh.dim + 1), mesh.dim + 1))
    return out


def assemble(mesh, terms, flow=None):
    """Assemble a FormSpec (list of term objects) into a LinearSystem."""
    needs_flow = any(isinstance(t, (AdvAdv, AdvSkew)) for t in terms)
    velocity = None
    if needs_flow:
        if flow is None:
            raise AssemblyError("form contains advection terms but no flow was given")
        velocity = flow if isinstance(flow, np.ndarray) else flow.velocity
    is_complex = any(np.iscomplexobj(np.asarray(t.weight)) for t in terms)
    dtype = complex if is_complex else float
    A = sp.csr_matrix((mesh.num_nodes, mesh.num_nodes), dtype=dtype)
    b = np.zeros(mesh.num_nodes, dtype=dtype)
    W = C = None
    for t in terms:
        if isinstance(t, GradGrad):
            A = A + t.weight * stiffness_matrix(mesh)
        elif isinstance(t, Mass):
            A = A + t.weight * mass_matrix(mesh)
        elif isinstance(t, (AdvAdv, AdvSkew)):
            if W is None:
                W, C = advection_matrices(mesh, velocity)
            if isinstance(t, AdvAdv):
                A = A + t.weight * W
            else:
                A = A + t.weight * (C - C.T)
        elif isinstance(t, BoundaryMass):
            A = A + t.weight * boundary_mass_matrix(mesh, t.group)
        elif isinstance(t, BoundaryAverageLoad):
            b += (t.weight / mesh.group_measure(t.group)) * boundary_load_vector(mesh, t.group)
        else:
            raise AssemblyError(f"unknown form term {t!r}")
    return LinearSystem(A, b, mesh, periodic=bool(mesh.periodic_pairs))


# -- constraints -------------------------------------------------------------

def periodic_reduction(mesh, pairings=None):
    """Prolongation matrix T (full dofs from reduced dofs) for periodic pairs.

    Chained pairs (edge and corner nodes) are resolved by union-find; the
    canonical representative is the smallest node index in each class.
    """
    n = mesh.num_nodes
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    pairs = mesh.periodic_pairs if pairings is None else pairings
    for arr in pairs.values():
        for m, s in arr:
            rm, rs = find(m), find(s)
            if rm != rs:
                lo, hi = (rm, rs) if rm < rs else (rs, rm)
                parent[hi] = lo
    root = np.array([find(i) for i in range(n)])
    uniq, red = np.unique(root, return_inverse=True)
    T = sp.coo_matrix((np.ones(n), (np.arange(n), red)), shape=(n, len(uniq))).tocsr()
    return T


def _direct_solve(A, b, residual_tol):
    lu = spla.splu(A.tocsc())
    x = lu.solve(b)
    resid = np.linalg.norm(A @ x - b)
    scale = max(np.linalg.norm(b), 1e-300)
    if not np.isfinite(resid) or resid / scale > residual_tol:
        raise SolverError(f"direct solve residual {resid / scale:.3e} exceeds "
                          f"{residual_tol:.1e}")
    return x


def solve(system, constraint=None, dirichlet=None, residual_tol=1e-10):
    """Solve a LinearSystem under the requested constraint.

    constraint: None, or "zero_mean" (one Lagrange multiplier fixing the
    exact integral mean to zero; the unconstrained rhs must be compatible).
    dirichlet: optional (nodes, values) fixing nodal values.
    Returns the full nodal solution (periodic slaves filled from masters).
    """
    mesh = system.mesh
    dtype = np.promote_types(system.matrix.dtype, system.rhs.dtype)
    A = system.matrix.astype(dtype)
    b = system.rhs.astype(dtype)
    if system.periodic:
        T = periodic_reduction(mesh)
        A = (T.T @ A @ T).tocsr()
        b = T.T @ b
    else:
        T = None

    if dirichlet is not None:
        nodes, values = dirichlet
        nodes = np.asarray(nodes, dtype=np.int64)
        values = np.asarray(values, dtype=A.dtype)
        if T is not None:
            raise AssemblyError("combined periodic and Dirichlet constraints "
                                "are not supported")
        free = np.setdiff1d(np.arange(mesh.num_nodes), nodes)
        x = np.zeros(mesh.num_nodes, dtype=A.dtype)
        x[nodes] = values
        rhs = b[free] - A[free][:, nodes] @ values
        x[free] = _direct_solve(A[free][:, free].tocsr(), rhs, residual_tol)
        return x

    if constraint == "zero_mean":
        m = lumped_volume_vector(mesh)
        if T is not None:
            m = T.T @ m
        comp = abs(np.ones(len(b)) @ b)
        scale = max(np.linalg.norm(b), 1e-300)
        if comp / scale > 1e-10:
            raise SolverError(
                f"pure-Neumann right side incompatible: defect {comp / scale:.3e}")
        n = A.shape[0]
        aug = sp.bmat([[A, m.reshape(-1, 1).astype(A.dtype)],
                       [m.reshape(1, -1).astype(A.dtype), None]], format='csc')
        rhs = np.concatenate([b, [0.0]])
        x = _direct_solve(aug, rhs, residual_tol)[:n]
    elif constraint is None:
        x = _direct_solve(A.tocsc(), b, residual_tol)
    else:
        raise AssemblyError(f"unknown constraint {constraint!r}")

    if T is not None:
        x = T @ x
    return x


# -- integration -------------------------------------------------------------

def integrate(mesh, field=None, group=None):
    """Integral of a nodal field over the cells, or over a facet group.

    ``field=None`` integrates 1 (the measure).  Exact for P1 fields.
    """
    if group is None:
        if field is None:
            return float(np.abs(mesh.cell_volumes()).sum())
        _, vols = p1_geometry(mesh)
        vals = np.asarray(field)[mesh.cells]
        return (vols * vals.mean(axis=1)).sum()
    meas = mesh.facet_measures(group)
    if field is None:
        return float(meas.sum())
    if meas.size == 0:
        raise AssemblyError(f"facet group {group!r} is empty")
    vals = np.asarray(field)[mesh.facet_group(group)]
    return (meas * vals.mean(axis=1)).sum()


def integrate_gradient(mesh, field):
    """Vector integral of the (cell-constant) gradient of a nodal field."""
    grads, vols = p1_geometry(mesh)
    vals = np.asarray(field)[mesh.cells]
    return np.einsum('m,mi,mid->d', vols, vals, grads)


def xi_measure(mesh):
    """In-plane cell measure |Xi|, read off the top-face group."""
    return mesh.group_measure("I+")


def fint(mesh, field=None, group=None, xi=None):
    """Cell average: any integral over the cell normalized by |Xi|."""
    xi = xi_measure(mesh) if xi is None else xi
    return integrate(mesh, field, group) / xi


def cell_gradients(mesh, field):
    """Cell-constant gradient vectors of a nodal field."""
    grads, _ = p1_geometry(mesh)
    vals = np.asarray(field)[mesh.cells]
    return np.einsum('mi,mid->md', vals, grads)


def recover_nodal_gradient(mesh, field):
    """Volume-weighted average of adjacent cell gradients at each node."""
    g = cell_gradients(mesh, field)
    _, vols = p1_geometry(mesh)
    num = np.zeros((mesh.num_nodes, mesh.dim))
    den = np.zeros(mesh.num_nodes)
    idx = mesh.cells.reshape(-1)
    np.add.at(num, idx, np.repeat(g * vols[:, None], mesh.dim + 1, axis=0))
    np.add.at(den, idx, np.repeat(vols, mesh.dim + 1))
    return num / den[:, None]


def function_load_vector(mesh, fn):
    """Load vector int f phi_i with a degree-4 rule (2D only)."""
    if mesh.dim != 2:
        raise AssemblyError("function loads are only provided on 2D meshes")
    _, vols = p1_geometry(mesh)
    x = mesh.nodes[mesh.cells]
    out = np.zeros(mesh.num_nodes, dtype=complex)
    for lam, wt in zip(_TRI_Q4_L, _TRI_Q4_W):
        pts = np.einsum('i,mid->md', lam, x)
        f = fn(pts)
        contrib = wt * vols * f
        for i in range(3):
            np.add.at(out, mesh.cells[:, i], lam[i] * contrib)
    return out


def l2_error(mesh, field, exact_fn):
    """L2 distance between a P1 field and an exact function (2D)."""
    _, vols = p1_geometry(mesh)
    x = mesh.nodes[mesh.cells]
    vals = np.asarray(field)[mesh.cells]
    acc = 0.0
    for lam, wt in zip(_TRI_Q4_L, _TRI_Q4_W):
        pts = np.einsum('i,mid->md', lam, x)
        uh = np.einsum('i,mi->m', lam, vals)
        diff = np.abs(uh - exact_fn(pts)) ** 2
        acc += (wt * vols * diff).sum()
    return math.sqrt(acc)
