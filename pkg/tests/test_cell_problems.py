import numpy as np
import pytest

from perfoplate import fem
from perfoplate.cell_mesh import generate_unit_cell_mesh
from perfoplate.cell_problems import (MachBoundError, assemble_Aw,
                                      solve_cell_problems, solve_pi_P,
                                      solve_pi_beta, solve_xi)
from perfoplate.flow import solve_cell_potential_flow, uniform_flow
from perfoplate.geometry import CellGeometry


def zero_flow(mesh, props):
    return uniform_flow(mesh, (0.0, 0.0, 0.0), props)


def test_operator_is_periodic_laplacian_at_rest(straight_cell_mesh, props):
    op = assemble_Aw(straight_cell_mesh, zero_flow(straight_cell_mesh, props), props)
    K = fem.stiffness_matrix(straight_cell_mesh) / op.xi
    assert abs(op.matrix - K).max() == 0.0


def test_operator_symmetric_exactly(slant_cell_mesh, props):
    flow = solve_cell_potential_flow(slant_cell_mesh, 3.0, props)
    op = assemble_Aw(slant_cell_mesh, flow, props)
    assert abs(op.matrix - op.matrix.T).max() < 1e-14 * abs(op.matrix).max()


def test_operator_psd_near_bound(straight_cell_mesh, props):
    speed = 0.99 * props.mach_speed_limit
    flow = uniform_flow(straight_cell_mesh, (0.0, 0.0, speed), props)
    op = assemble_Aw(straight_cell_mesh, flow, props)
    T = op.reduction
    A = (T.T @ op.matrix @ T).toarray()
    eigs = np.linalg.eigvalsh(A)
    scale = abs(eigs).max()
    assert eigs[0] > -1e-12 * scale          # constants nullspace
    assert eigs[1] > 1e-8 * scale            # next eigenvalue strictly positive


def test_mach_guard_trips_exactly_at_bound(straight_cell_mesh, props):
    limit = props.mach_speed_limit
    at = uniform_flow(straight_cell_mesh, (0.0, 0.0, limit), props)
    with pytest.raises(MachBoundError) as err:
        assemble_Aw(straight_cell_mesh, at, props)
    msg = str(err.value)
    assert f"{limit:.6g}" in msg and "max |w|" in msg
    below = uniform_flow(straight_cell_mesh, (0.0, 0.0, np.nextafter(limit, 0.0)),
                         props)
    assemble_Aw(straight_cell_mesh, below, props)  # must not raise


def test_empty_cell_correctors(empty_cell_mesh, props):
    op = assemble_Aw(empty_cell_mesh, zero_flow(empty_cell_mesh, props), props)
    z = empty_cell_mesh.nodes[:, 2]
    assert np.abs(solve_pi_beta(op, 1)).max() < 1e-12
    assert np.abs(solve_pi_beta(op, 2)).max() < 1e-12
    np.testing.assert_allclose(solve_xi(op), -z, atol=1e-12)
    assert np.abs(solve_pi_P(op)).max() == 0.0


def test_empty_cell_with_uniform_flow_analytic(empty_cell_mesh, props):
    """1D closed forms for a box cell under uniform vertical advection."""
    u3 = 5.0
    flow = solve_cell_potential_flow(empty_cell_mesh, u3, props)
    sols = solve_cell_problems(empty_cell_mesh, flow, props)
    z = empty_cell_mesh.nodes[:, 2]
    m = props.tau * u3 ** 2 / props.c ** 2
    np.testing.assert_allclose(sols.xi, -z / (1 - m), atol=1e-11)
    np.testing.assert_allclose(
        sols.pi_P, (props.theta * u3 / props.c ** 2) * z / (1 - m), atol=1e-14)
    assert np.abs(sols.pi1).max() < 1e-11
    assert np.abs(sols.pi2).max() < 1e-11


def test_static_reduction_matches_plain_laplace(slant_cell_mesh, props):
    flow = zero_flow(slant_cell_mesh, props)
    sols = solve_cell_problems(slant_cell_mesh, flow, props)
    # plain periodic Laplace solves, assembled independently of the operator
    sys = fem.assemble(slant_cell_mesh, [fem.GradGrad(1.0 / fem.xi_measure(slant_cell_mesh))])
    y1 = slant_cell_mesh.nodes[:, 0]
    sys.rhs = -(sys.matrix @ y1)
    pi1 = fem.solve(sys, constraint="zero_mean")
    np.testing.assert_allclose(sols.pi1, pi1, atol=1e-10)


def test_zero_mean_and_periodicity(slant_cell_mesh, props):
    flow = solve_cell_potential_flow(slant_cell_mesh, 2.0, props)
    sols = solve_cell_problems(slant_cell_mesh, flow, props)
    vol = fem.integrate(slant_cell_mesh)
    for field in (sols.pi1, sols.pi2, sols.xi, sols.pi_P):
        mean = fem.integrate(slant_cell_mesh, field) / vol
        assert abs(mean) <= 1e-12 * max(np.linalg.norm(field), 1.0)
        for pairs in slant_cell_mesh.periodic_pairs.values():
            np.testing.assert_array_equal(field[pairs[:, 0]], field[pairs[:, 1]])


def test_loads_compatible(slant_cell_mesh, props):
    from perfoplate.cell_problems import (advective_load, tangential_load,
                                          transverse_load)
    flow = solve_cell_potential_flow(slant_cell_mesh, 4.0, props)
    op = assemble_Aw(slant_cell_mesh, flow, props)
    T = op.reduction
    for load in (tangential_load(op, 1), tangential_load(op, 2),
                 transverse_load(op), advective_load(op)):
        r = T.T @ load
        assert abs(r.sum()) <= 1e-10 * max(np.linalg.norm(r), 1e-12)


def test_mirror_antisymmetry_of_tangential_corrector(props):
    """On a mirror-symmetric cell with vertical flow the first in-plane
    corrector is odd under the mirror."""
    mesh = generate_unit_cell_mesh(CellGeometry(), 0.1)
    flow = solve_cell_potential_flow(mesh, 1.5, props)
    op = assemble_Aw(mesh, flow, props)
    pi1 = solve_pi_beta(op, 1)
    lookup = {(round(p[0], 9), round(p[1], 9), round(p[2], 9)): i
              for i, p in enumerate(mesh.nodes)}
    perm = np.array([lookup[(round(1.0 - p[0], 9), round(p[1], 9), round(p[2], 9))]
                     for p in mesh.nodes])
    defect = np.abs(pi1 + pi1[perm]).max()
    assert defect <= 1e-8 * max(np.abs(pi1).max(), 1e-12)


def test_pi_P_linearity_for_small_flow(straight_cell_mesh, props):
    # the operator itself depends on the flow, so linearity holds to first
    # order only; doubling a small flow must double the corrector
    base = solve_cell_potential_flow(straight_cell_mesh, 1.0, props)
    alpha = 1e-3
    one = solve_pi_P(assemble_Aw(straight_cell_mesh, base.scaled(alpha), props))
    two = solve_pi_P(assemble_Aw(straight_cell_mesh, base.scaled(2 * alpha), props))
    mismatch = np.linalg.norm(two - 2.0 * one) / np.linalg.norm(two)
    assert mismatch <= 1e-5


def test_correctors_converge_to_static_limit(slant_cell_mesh, props):
    static = solve_cell_problems(slant_cell_mesh,
                                 zero_flow(slant_cell_mesh, props), props)
    tiny = solve_cell_problems(
        slant_cell_mesh, solve_cell_potential_flow(slant_cell_mesh, 1e-4, props),
        props)
    for a, b in ((tiny.pi1, static.pi1), (tiny.xi, static.xi)):
        assert np.abs(a - b).max() <= 1e-6 * max(np.abs(b).max(), 1.0)
    assert np.abs(tiny.pi_P).max() <= 1e-6


def test_duality_pairing_vs_surface_jump(slant_cell_mesh, props):
    """Operator pairing of the flux corrector with an in-plane corrector
    equals minus the top/bottom average jump of the latter."""
    flow = solve_cell_potential_flow(slant_cell_mesh, 3.0, props)
    sols = solve_cell_problems(slant_cell_mesh, flow, props)
    op = sols.operator
    for pi in (sols.pi1, sols.pi2):
        pairing = op.pair(sols.xi, pi)
        jump = (fem.fint(slant_cell_mesh, pi, group="I+")
                - fem.fint(slant_cell_mesh, pi, group="I-"))
        assert abs(pairing + jump) <= 1e-10 * max(abs(jump), 1e-3)


def test_solver_residual_contract(slant_cell_mesh, props):
    flow = solve_cell_potential_flow(slant_cell_mesh, 2.0, props)
    op = assemble_Aw(slant_cell_mesh, flow, props)
    xi = solve_xi(op)
    from perfoplate.cell_problems import transverse_load
    rhs = op.reduction.T @ transverse_load(op)
    resid = np.linalg.norm((op.reduction.T @ (op.matrix @ xi)) - rhs)
    assert resid <= 1e-9 * np.linalg.norm(rhs)
