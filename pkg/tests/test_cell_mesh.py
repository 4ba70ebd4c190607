import math

import numpy as np
import pytest

from perfoplate.cell_mesh import generate_unit_cell_mesh
from perfoplate.geometry import CellGeometry


def fluid_volume_formula(geom):
    hole = math.pi * geom.hole_diameter ** 2 / 4.0
    return geom.b1 * geom.b2 * geom.kappa - geom.thickness * (geom.xi_area - hole)


def test_empty_cell_is_plain_box(empty_cell_mesh):
    m = empty_cell_mesh
    assert "solid" not in m.facet_groups
    assert abs(m.cell_volumes().sum() - 1.0) < 1e-12
    assert abs(m.nodes[:, 2].min() + 0.5) < 1e-12
    assert abs(m.nodes[:, 2].max() - 0.5) < 1e-12


def test_straight_hole_volume(straight_cell_mesh):
    geom = CellGeometry()
    vol = straight_cell_mesh.cell_volumes().sum()
    expected = fluid_volume_formula(geom)
    assert abs(vol - expected) / expected < 0.02


def test_shear_preserves_volume():
    coarse = 0.12
    v0 = generate_unit_cell_mesh(CellGeometry(), coarse).cell_volumes().sum()
    v30 = generate_unit_cell_mesh(CellGeometry(hole_slope_deg=30.0),
                                  coarse).cell_volumes().sum()
    assert v30 == pytest.approx(v0, abs=1e-13)


@pytest.mark.parametrize("phi", [-60.0, -30.0, 0.0, 30.0, 60.0])
def test_positive_volumes_after_shear(phi):
    # default resolution; the shear is affine with unit determinant on every
    # tet, so inversion is impossible by construction
    mesh = generate_unit_cell_mesh(CellGeometry(hole_slope_deg=phi), 0.08)
    assert mesh.cell_volumes().min() > 0


def test_face_areas_match_cell_section(straight_cell_mesh):
    geom = CellGeometry()
    assert straight_cell_mesh.group_measure("I+") == pytest.approx(geom.xi_area, rel=1e-12)
    assert straight_cell_mesh.group_measure("I-") == pytest.approx(geom.xi_area, rel=1e-12)


def test_groups_partition_boundary(slant_cell_mesh):
    slant_cell_mesh.validate()


def test_anisotropic_cell():
    geom = CellGeometry(b1=1.25, b2=0.8, hole_diameter=0.2)
    mesh = generate_unit_cell_mesh(geom, 0.1)
    mesh.validate()
    assert mesh.group_measure("I+") == pytest.approx(1.0, rel=1e-12)
    expected = fluid_volume_formula(geom)
    assert abs(mesh.cell_volumes().sum() - expected) / expected < 0.02


def mirror_map(mesh, b1=1.0):
    """Node index permutation of the y1 -> b1 - y1 reflection."""
    key = {}
    for i, p in enumerate(mesh.nodes):
        key[(round(p[0], 9), round(p[1], 9), round(p[2], 9))] = i
    perm = np.empty(mesh.num_nodes, dtype=int)
    for i, p in enumerate(mesh.nodes):
        j = key.get((round(b1 - p[0], 9), round(p[1], 9), round(p[2], 9)))
        assert j is not None, f"node {i} has no mirror partner"
        perm[i] = j
    return perm


def test_unsheared_mesh_is_mirror_symmetric(straight_cell_mesh):
    perm = mirror_map(straight_cell_mesh)
    cells = {tuple(sorted(c)) for c in straight_cell_mesh.cells.tolist()}
    mirrored = {tuple(sorted(perm[c].tolist()))
                for c in straight_cell_mesh.cells}
    assert cells == mirrored


def test_opposite_slants_are_mirror_meshes():
    mp = generate_unit_cell_mesh(CellGeometry(hole_slope_deg=30.0), 0.12)
    mm = generate_unit_cell_mesh(CellGeometry(hole_slope_deg=-30.0), 0.12)
    np.testing.assert_array_equal(mp.cells, mm.cells)
    flipped = mm.nodes.copy()
    flipped[:, 0] = 1.0 - flipped[:, 0]
    np.testing.assert_allclose(np.sort(mp.nodes[:, 0]), np.sort(flipped[:, 0]),
                               atol=1e-12)
