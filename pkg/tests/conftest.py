import numpy as np
import pytest

from perfoplate.cell_mesh import generate_unit_cell_mesh
from perfoplate.duct_mesh import generate_waveguide_mesh
from perfoplate.fem import FluidProperties
from perfoplate.geometry import CellGeometry, WaveguideGeometry
from perfoplate.mesh import Mesh


@pytest.fixture(scope="session")
def props():
    return FluidProperties()


@pytest.fixture(scope="session")
def empty_cell_mesh():
    return generate_unit_cell_mesh(CellGeometry(plate_thickness=0.0), 0.15)


@pytest.fixture(scope="session")
def straight_cell_mesh():
    return generate_unit_cell_mesh(CellGeometry(), 0.1)


@pytest.fixture(scope="session")
def slant_cell_mesh():
    return generate_unit_cell_mesh(CellGeometry(hole_slope_deg=30.0), 0.1)


@pytest.fixture(scope="session")
def duct_mesh():
    return generate_waveguide_mesh(WaveguideGeometry(), 0.02)


@pytest.fixture(scope="session")
def duct_mesh_single():
    return generate_waveguide_mesh(WaveguideGeometry(), 0.02, split_interface=False)


def structured_square_mesh(n, groups=True):
    """Uniform triangulation of the unit square, for FEM unit tests."""
    xs = np.linspace(0.0, 1.0, n + 1)
    ids = np.arange((n + 1) * (n + 1)).reshape(n + 1, n + 1)
    nodes = np.array([(x, y) for x in xs for y in xs])
    tris = []
    for i in range(n):
        for j in range(n):
            a, b = ids[i, j], ids[i + 1, j]
            c, d = ids[i + 1, j + 1], ids[i, j + 1]
            tris.append((a, b, c))
            tris.append((a, c, d))
    fg = {}
    if groups:
        fg = {
            "left": [(ids[0, j], ids[0, j + 1]) for j in range(n)],
            "right": [(ids[n, j], ids[n, j + 1]) for j in range(n)],
            "bottom": [(ids[i, 0], ids[i + 1, 0]) for i in range(n)],
            "top": [(ids[i, n], ids[i + 1, n]) for i in range(n)],
        }
    return Mesh(2, nodes, np.array(tris), {k: np.array(v) for k, v in fg.items()})
