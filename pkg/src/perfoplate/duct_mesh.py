"""Structured triangulation of the quasi-2D waveguide section.

The section consists of a main box split by the horizontal interface line
into the lower/upper acoustic subdomains, an inlet duct attached at the
bottom of the left edge, and an outlet duct at the top of the right edge.
With the interface at mid-height the whole construction is symmetric under
a 180-degree rotation about the center, which the no-flow reciprocity
checks exploit.

Interface nodes are duplicated so the traces from below and above are
independent unknowns; the correspondence is stored as the ``iface``
periodic pairing (used to re-glue the domain for the mean-flow solve).
"""

from __future__ import annotations

import numpy as np

from .geometry import WaveguideGeometry
from .mesh import Mesh

GROUP_IN = "Gamma_in"
GROUP_OUT = "Gamma_out"
GROUP_IFACE_MINUS = "Gamma0-"
GROUP_IFACE_PLUS = "Gamma0+"
GROUP_WALL = "wall"
IFACE_PAIRING = "iface"


def _lines(lo, hi, res):
    n = max(1, int(round((hi - lo) / res)))
    return lo + (hi - lo) * np.arange(n + 1) / n


def _multi_lines(breaks, res):
    out = [np.array([breaks[0]])]
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        out.append(_lines(lo, hi, res)[1:])
    return np.concatenate(out)


class _Builder:
    def __init__(self):
        self.nodes = []
        self.index = {}
        self.tris = []

    def node(self, x, y):
        key = (round(x, 12), round(y, 12))
        idx = self.index.get(key)
        if idx is None:
            idx = len(self.nodes)
            self.index[key] = idx
            self.nodes.append((x, y))
        return idx

    def grid(self, xs, ys):
        ids = np.array([[self.node(x, y) for y in ys] for x in xs])
        for i in range(len(xs) - 1):
            for j in range(len(ys) - 1):
                n00, n01 = ids[i, j], ids[i, j + 1]
                n10, n11 = ids[i + 1, j], ids[i + 1, j + 1]
                self.tris.append((n00, n10, n11))
                self.tris.append((n00, n11, n01))


def generate_waveguide_mesh(geom: WaveguideGeometry, resolution: float = 0.0125,
                            split_interface: bool = True) -> Mesh:
    """Triangle mesh of the waveguide with tagged boundary groups.

    With ``split_interface`` the interface nodes are duplicated (groups
    ``Gamma0-`` / ``Gamma0+``, pairing ``iface``); otherwise the mesh is a
    single connected transparent duct, useful as a reference.
    """
    s = geom.interface_pos
    H = geom.total_height
    ys_main = _multi_lines([0.0, geom.h_io, s, H - geom.h_io, H], resolution)
    xs_main = _lines(0.0, geom.l_m, resolution)
    xs_in = _lines(-geom.l_io, 0.0, resolution)
    xs_out = _lines(geom.l_m, geom.l_m + geom.l_io, resolution)
    ys_in = ys_main[ys_main <= geom.h_io + 1e-12]
    ys_out = ys_main[ys_main >= H - geom.h_io - 1e-12]

    b = _Builder()
    b.grid(xs_in, ys_in)
    b.grid(xs_main, ys_main)
    b.grid(xs_out, ys_out)
    nodes = np.array(b.nodes)
    tris = np.array(b.tris, dtype=np.int64)

    pairs = {}
    if split_interface:
        tol = 1e-9 * max(geom.l_m, H)
        on_iface = np.nonzero(np.abs(nodes[:, 1] - s) < tol)[0]
        on_iface = on_iface[np.argsort(nodes[on_iface, 0])]
        dup_of = {}
        extra = []
        for n in on_iface:
            dup_of[n] = len(nodes) + len(extra)
            extra.append(nodes[n])
        nodes = np.vstack([nodes, np.array(extra)])
        cen_y = nodes[tris].mean(axis=1)[:, 1]
        above = cen_y > s
        remap = tris[above]
        for old, new in dup_of.items():
            remap[remap == old] = new
        tris = tris.copy()
        tris[above] = remap
        pairs[IFACE_PAIRING] = np.array(
            [(m, dup_of[m]) for m in on_iface], dtype=np.int64)

    mesh = Mesh(2, nodes, tris)
    tol = 1e-9 * max(geom.l_m + 2 * geom.l_io, H)
    groups = {GROUP_IN: [], GROUP_OUT: [], GROUP_WALL: []}
    if split_interface:
        groups[GROUP_IFACE_MINUS] = []
        groups[GROUP_IFACE_PLUS] = []
        minus_set = set(pairs[IFACE_PAIRING][:, 0].tolist())
        plus_set = set(pairs[IFACE_PAIRING][:, 1].tolist())
    for a, c in sorted(map(tuple, mesh.boundary_facets())):
        xa, ya = nodes[a]
        xc, yc = nodes[c]
        if abs(xa + geom.l_io) < tol and abs(xc + geom.l_io) < tol:
            groups[GROUP_IN].append((a, c))
        elif abs(xa - geom.l_m - geom.l_io) < tol and abs(xc - geom.l_m - geom.l_io) < tol:
            groups[GROUP_OUT].append((a, c))
        elif split_interface and a in minus_set and c in minus_set:
            groups[GROUP_IFACE_MINUS].append((a, c))
        elif split_interface and a in plus_set and c in plus_set:
            groups[GROUP_IFACE_PLUS].append((a, c))
        else:
            groups[GROUP_WALL].append((a, c))

    mesh = Mesh(2, nodes, tris,
                {k: np.array(v, dtype=np.int64).reshape(-1, 2) for k, v in groups.items()},
                pairs)
    return mesh.validate()


def interface_nodes(mesh):
    """(minus ids, plus ids, x1 coordinates), sorted along the interface."""
    pairs = mesh.periodic_pairs[IFACE_PAIRING]
    x = mesh.nodes[pairs[:, 0], 0]
    order = np.argsort(x)
    return pairs[order, 0], pairs[order, 1], x[order]
