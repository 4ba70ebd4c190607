import csv
import io
from dataclasses import replace

import numpy as np
import pytest

from perfoplate.cell_mesh import generate_unit_cell_mesh
from perfoplate.cell_problems import solve_cell_problems
from perfoplate.coefficients import (CSV_HEADER, cell_pipeline,
                                     compute_coefficients,
                                     empty_cell_coefficients, rows_to_csv,
                                     sweep_coefficients, verify_symmetries)
from perfoplate.flow import solve_cell_potential_flow, uniform_flow
from perfoplate.geometry import CellGeometry


def test_empty_cell_exact_limits(empty_cell_mesh, props):
    flow = solve_cell_potential_flow(empty_cell_mesh, 0.0, props)
    sols = solve_cell_problems(empty_cell_mesh, flow, props)
    co = compute_coefficients(empty_cell_mesh, flow, sols, props)
    np.testing.assert_allclose(co.A, np.eye(2), atol=1e-10)
    assert co.F == pytest.approx(1.0, abs=1e-10)
    assert abs(co.zeta_star - 1.0) < 1e-10
    np.testing.assert_allclose(co.B, 0.0, atol=1e-10)
    np.testing.assert_allclose(co.Bp, 0.0, atol=1e-10)
    for v in (co.Mw, co.Tw, co.Twp):
        assert v == 0.0
    np.testing.assert_array_equal(co.Wbar, 0.0)
    np.testing.assert_array_equal(co.Wbarp, 0.0)


def test_empty_cell_with_flow_analytic(empty_cell_mesh, props):
    u3 = 4.0
    flow = solve_cell_potential_flow(empty_cell_mesh, u3, props)
    sols = solve_cell_problems(empty_cell_mesh, flow, props)
    co = compute_coefficients(empty_cell_mesh, flow, sols, props)
    m = props.tau * u3 ** 2 / props.c ** 2
    assert co.F == pytest.approx(1.0 / (1.0 - m), rel=1e-12)
    assert co.Tw == pytest.approx(-u3 / (1.0 - m), rel=1e-12)
    assert co.Twp == pytest.approx(props.theta * u3 / (props.c ** 2 * (1.0 - m)),
                                   rel=1e-12)
    assert co.Mw == pytest.approx(
        props.theta ** 2 * u3 ** 2 / (props.c ** 2 * (1.0 - m)), rel=1e-12)
    np.testing.assert_allclose(co.A, np.eye(2), atol=1e-10)
    np.testing.assert_allclose(co.Wbar, 0.0, atol=1e-12)


def test_zero_flow_coefficients_vanish_exactly(slant_cell_mesh, props):
    flow = uniform_flow(slant_cell_mesh, (0.0, 0.0, 0.0), props)
    sols = solve_cell_problems(slant_cell_mesh, flow, props)
    co = compute_coefficients(slant_cell_mesh, flow, sols, props)
    assert co.Mw == 0.0 and co.Tw == 0.0 and co.Twp == 0.0
    np.testing.assert_array_equal(co.Wbar, 0.0)
    np.testing.assert_array_equal(co.Wbarp, 0.0)
    # duality cross-check at rest
    np.testing.assert_allclose(co.B, co.Bp, atol=1e-8)


def test_symmetries_with_flow(slant_cell_mesh, props):
    flow = solve_cell_potential_flow(slant_cell_mesh, 5.0, props)
    sols = solve_cell_problems(slant_cell_mesh, flow, props)
    co = compute_coefficients(slant_cell_mesh, flow, sols, props)
    report = verify_symmetries(co, tol=1e-8, properties=props,
                               speed_scale=flow.max_speed())
    assert report.passed, str(report)
    assert co.A[0, 0] > 0 and co.A[1, 1] > 0
    assert np.linalg.det(co.A) > 0  # positive definite tangential tensor


def test_fault_injection_flagged(slant_cell_mesh, props):
    flow = solve_cell_potential_flow(slant_cell_mesh, 5.0, props)
    sols = solve_cell_problems(slant_cell_mesh, flow, props)
    co = compute_coefficients(slant_cell_mesh, flow, sols, props)
    corrupted = replace(co, Bp=co.Bp + np.array([0.05, 0.0]))
    report = verify_symmetries(corrupted, tol=1e-8, properties=props,
                               speed_scale=flow.max_speed())
    assert not report.passed
    bad = [c for c in report.checks if not c.passed]
    assert any("B" in c.name for c in bad)


def test_gauge_invariance(slant_cell_mesh, props):
    """Adding constants to the correctors must not change any coefficient."""
    flow = solve_cell_potential_flow(slant_cell_mesh, 3.0, props)
    sols = solve_cell_problems(slant_cell_mesh, flow, props)
    co = compute_coefficients(slant_cell_mesh, flow, sols, props)
    shifted = replace(sols, pi1=sols.pi1 + 0.7, pi2=sols.pi2 - 1.3,
                      xi=sols.xi + 2.0, pi_P=sols.pi_P + 0.1)
    co2 = compute_coefficients(slant_cell_mesh, flow, shifted, props)
    np.testing.assert_allclose(co2.A, co.A, atol=1e-10)
    np.testing.assert_allclose(co2.B, co.B, atol=1e-12)
    np.testing.assert_allclose(co2.Bp, co.Bp, atol=1e-12)
    assert co2.F == pytest.approx(co.F, abs=1e-12)
    assert co2.Tw == pytest.approx(co.Tw, abs=1e-12)
    assert co2.Twp == pytest.approx(co.Twp, abs=1e-14)
    np.testing.assert_allclose(co2.Wbar, co.Wbar, atol=1e-12)
    np.testing.assert_allclose(co2.Qw, co.Qw, atol=1e-10)


def test_mirrored_slants_mirror_coefficients(props):
    """Opposite hole slopes give exactly mirrored coefficient sets."""
    res = 0.1
    _, _, _, cp = cell_pipeline(CellGeometry(hole_slope_deg=30.0), 2.0, res, props)
    _, _, _, cm = cell_pipeline(CellGeometry(hole_slope_deg=-30.0), 2.0, res, props)
    assert cm.A[0, 0] == pytest.approx(cp.A[0, 0], rel=1e-12)
    assert cm.F == pytest.approx(cp.F, rel=1e-12)
    assert cm.Tw == pytest.approx(cp.Tw, rel=1e-12)
    assert cm.B[0] == pytest.approx(-cp.B[0], rel=1e-10)
    assert cm.Wbar[0] == pytest.approx(-cp.Wbar[0], rel=1e-10)
    assert cm.A[0, 1] == pytest.approx(-cp.A[0, 1], abs=1e-12)


def test_hole_size_raises_resistance(props):
    """A narrower hole makes the through-flow resistance larger."""
    big = CellGeometry(hole_diameter=0.4)
    small = CellGeometry(hole_diameter=0.24)
    _, _, _, co_big = cell_pipeline(big, 0.0, 0.1, props)
    _, _, _, co_small = cell_pipeline(small, 0.0, 0.1, props)
    assert co_small.F > co_big.F > 1.0


def test_csv_schema_and_determinism(props):
    geom = CellGeometry()
    rows, failures = sweep_coefficients(geom, [0.0], [0.0, 1.0], 0.12, props)
    assert not failures
    text = rows_to_csv(rows)
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    assert header == CSV_HEADER.split(",")
    assert len(list(reader)) == 2
    rows2, _ = sweep_coefficients(geom, [0.0], [0.0, 1.0], 0.12, props)
    assert rows_to_csv(rows2) == text


def test_sweep_single_point_matches_pipeline(props):
    geom = CellGeometry(hole_slope_deg=30.0)
    rows, _ = sweep_coefficients(geom, [30.0], [2.0], 0.12, props)
    _, flw, _, co = cell_pipeline(geom, 2.0, 0.12, props)
    report = verify_symmetries(co, properties=props,
                               speed_scale=max(flw.max_speed(), 2.0))
    expected = co.as_row(30.0, 2.0, report.max_defect)
    np.testing.assert_allclose(rows[0], expected, rtol=1e-12)


def test_sweep_worker_count_invariance(props):
    geom = CellGeometry()
    rows1, _ = sweep_coefficients(geom, [0.0, 30.0], [0.0, 2.0], 0.12, props,
                                  jobs=1)
    rows2, _ = sweep_coefficients(geom, [0.0, 30.0], [0.0, 2.0], 0.12, props,
                                  jobs=2)
    assert rows_to_csv(rows1) == rows_to_csv(rows2)


def test_sweep_records_failures_and_continues(props):
    # a through-speed far beyond the coercivity bound must be recorded,
    # not fatal, and the other points must still be produced
    geom = CellGeometry(hole_slope_deg=60.0)
    rows, failures = sweep_coefficients(geom, [60.0], [0.0, 50.0], 0.12, props)
    assert len(rows) == 1 and rows[0][1] == 0.0
    assert len(failures) == 1 and failures[0][1] == 50.0


def test_empty_cell_helper_matches_computed(empty_cell_mesh, props):
    flow = solve_cell_potential_flow(empty_cell_mesh, 0.0, props)
    sols = solve_cell_problems(empty_cell_mesh, flow, props)
    co = compute_coefficients(empty_cell_mesh, flow, sols, props)
    helper = empty_cell_coefficients(kappa=co.kappa)
    np.testing.assert_allclose(co.A, helper.A, atol=1e-10)
    assert co.F == pytest.approx(helper.F, abs=1e-10)
