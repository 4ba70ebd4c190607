"""Simplex meshes with tagged facet groups, periodic pairings and field IO.

Meshes are plain containers: nodes, simplex connectivity (triangles in 2D,
tetrahedra in 3D), named facet groups (node tuples) and per-direction
periodic node pairs.  Instances are treated as immutable after construction;
geometric transforms return new meshes.

The on-disk format is plain text (``perfomesh v1``): a header line, a node
block, a cell block, one ``group`` block per facet group, one ``periodic``
block per pairing direction, and optional ``field`` blocks carrying nodal
values.
"""

from __future__ import annotations

import numpy as np

FORMAT_HEADER = "perfomesh v1"


class MeshError(ValueError):
    """Invalid mesh topology or geometry."""


class MeshFormatError(ValueError):
    """Malformed mesh file; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class Mesh:
    """Conforming simplex mesh (P1 geometry).

    Parameters
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    nodes : (N, dim) float array
        Node coordinates.
    cells : (M, dim+1) int array
        Simplex connectivity, 0-based.
    facet_groups : dict[str, (K, dim) int array]
        Named boundary facet sets (edges in 2D, triangles in 3D).
    periodic_pairs : dict[str, (P, 2) int array]
        Per-direction (master, slave) node pairs.
    fields : dict[str, array]
        Optional nodal fields attached to the mesh.
    """

    def __init__(self, dim, nodes, cells, facet_groups=None, periodic_pairs=None,
                 fields=None):
        if dim not in (2, 3):
            raise MeshError(f"dim must be 2 or 3, got {dim}")
        self.dim = int(dim)
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != dim:
            raise MeshError(f"nodes must have shape (N, {dim})")
        if self.cells.ndim != 2 or self.cells.shape[1] != dim + 1:
            raise MeshError(f"cells must have shape (M, {dim + 1})")
        if self.cells.size and (self.cells.min() < 0 or self.cells.max() >= len(self.nodes)):
            raise MeshError("cell connectivity references nodes out of range")
        self.facet_groups = {
            name: np.ascontiguousarray(f, dtype=np.int64).reshape(-1, dim)
            for name, f in (facet_groups or {}).items()
        }
        self.periodic_pairs = {
            name: np.ascontiguousarray(p, dtype=np.int64).reshape(-1, 2)
            for name, p in (periodic_pairs or {}).items()
        }
        self.fields = dict(fields or {})

    # -- basic queries -----------------------------------------------------

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_cells(self):
        return len(self.cells)

    def cell_volumes(self):
        """Signed simplex measures (areas in 2D, volumes in 3D)."""
        x = self.nodes[self.cells]
        e = x[:, 1:, :] - x[:, :1, :]
        if self.dim == 2:
            return 0.5 * (e[:, 0, 0] * e[:, 1, 1] - e[:, 0, 1] * e[:, 1, 0])
        det = np.linalg.det(e)
        return det / 6.0

    def facet_measures(self, name):
        """Lengths (2D) or areas (3D) of the facets in a group."""
        facets = self.facet_group(name)
        x = self.nodes[facets]
        if self.dim == 2:
            return np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
        cr = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        return 0.5 * np.linalg.norm(cr, axis=1)

    def group_measure(self, name):
        return float(self.facet_measures(name).sum())

    def facet_group(self, name):
        try:
            return self.facet_groups[name]
        except KeyError:
            raise MeshError(f"unknown facet group {name!r}") from None

    def group_nodes(self, name):
        """Sorted unique node indices touched by a facet group."""
        return np.unique(self.facet_group(name))

    def boundary_facets(self):
        """All facets owned by exactly one cell, as sorted node tuples."""
        c = self.cells
        if self.dim == 2:
            idx = [(0, 1), (1, 2), (2, 0)]
        else:
            idx = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        faces = np.concatenate([c[:, list(i)] for i in idx], axis=0)
        faces = np.sort(faces, axis=1)
        uniq, counts = np.unique(faces, axis=0, return_counts=True)
        return uniq[counts == 1]

    def validate(self):
        """Check invariants: positive volumes, groups on the boundary."""
        vols = self.cell_volumes()
        bad = np.nonzero(vols <= 0)[0]
        if bad.size:
            raise MeshError(
                f"cell {bad[0]} has non-positive volume {vols[bad[0]]:.3e}"
            )
        boundary = {tuple(f) for f in self.boundary_facets()}
        tagged = []
        for name, facets in self.facet_groups.items():
            for f in facets:
                key = tuple(sorted(f.tolist()))
                if key not in boundary:
                    raise MeshError(f"group {name!r} contains a non-boundary facet {key}")
                tagged.append(key)
        if len(tagged) != len(set(tagged)):
            raise MeshError("facet groups overlap")
        if self.facet_groups and len(tagged) != len(boundary):
            raise MeshError(
                f"facet groups do not partition the boundary "
                f"({len(tagged)} tagged vs {len(boundary)} boundary facets)"
            )
        return self

    def diameter(self):
        lo = self.nodes.min(axis=0)
        hi = self.nodes.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def with_nodes(self, nodes):
        """Copy of the mesh with transformed node coordinates."""
        return Mesh(self.dim, nodes, self.cells, self.facet_groups,
                    self.periodic_pairs, self.fields)

    def with_fields(self, **fields):
        merged = dict(self.fields)
        merged.update(fields)
        return Mesh(self.dim, self.nodes, self.cells, self.facet_groups,
                    self.periodic_pairs, merged)


def detect_periodic_pairs(mesh, group_pairs, tol=None):
    """Match nodes of opposite lateral faces up to a translation.

    Parameters
    ----------
    mesh : Mesh
    group_pairs : dict[str, (str, str)]
        Maps a direction label to (master group, slave group).  The
        translation vector is inferred as the difference of the group node
        centroids, which is exact for translated facet sets.
    tol : float, optional
        Absolute matching tolerance; defaults to ``1e-9 * mesh.diameter()``.

    Returns
    -------
    dict[str, (P, 2) int array] of (master, slave) node index pairs.
    """
    if tol is None:
        tol = 1e-9 * mesh.diameter()
    out = {}
    for direction, (master_group, slave_group) in group_pairs.items():
        masters = mesh.group_nodes(master_group)
        slaves = mesh.group_nodes(slave_group)
        if len(masters) != len(slaves):
            raise MeshError(
                f"periodic groups {master_group!r}/{slave_group!r} have "
                f"{len(masters)} vs {len(slaves)} nodes"
            )
        shift = mesh.nodes[slaves].mean(axis=0) - mesh.nodes[masters].mean(axis=0)
        target = mesh.nodes[slaves] - shift
        source = mesh.nodes[masters]
        order_m = np.lexsort(tuple(np.round(source[:, k] / tol) for k in range(mesh.dim)))
        order_s = np.lexsort(tuple(np.round(target[:, k] / tol) for k in range(mesh.dim)))
        src = source[order_m]
        tgt = target[order_s]
        err = np.linalg.norm(src - tgt, axis=1)
        worst = int(np.argmax(err))
        if err[worst] > tol:
            coord = tgt[worst] + shift
            raise MeshError(
                f"unmatched periodic node in direction {direction!r} at "
                f"{np.array2string(coord, precision=6)} "
                f"(mismatch {err[worst]:.3e} > tol {tol:.3e})"
            )
        pairs = np.column_stack([masters[order_m], slaves[order_s]])
        out[direction] = pairs
    return out


# -- plain-text IO ---------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def save_mesh(mesh, path):
    """Write a mesh (and attached nodal fields) in perfomesh v1 format."""
    lines = [FORMAT_HEADER]
    lines.append(f"nodes {mesh.num_nodes}")
    for row in mesh.nodes:
        lines.append(" ".join(_fmt(v) for v in row))
    lines.append(f"cells {mesh.num_cells}")
    for row in mesh.cells:
        lines.append(" ".join(str(int(v)) for v in row))
    for name in sorted(mesh.facet_groups):
        facets = mesh.facet_groups[name]
        lines.append(f"group {name} {len(facets)}")
        for row in facets:
            lines.append(" ".join(str(int(v)) for v in row))
    for name in sorted(mesh.periodic_pairs):
        pairs = mesh.periodic_pairs[name]
        lines.append(f"periodic {name} {len(pairs)}")
        for m, s in pairs:
            lines.append(f"{int(m)} {int(s)}")
    for name in sorted(mesh.fields):
        values = np.asarray(mesh.fields[name])
        kind = "complex" if np.iscomplexobj(values) else "real"
        lines.append(f"field {name} {kind} {len(values)}")
        if kind == "complex":
            for v in values:
                lines.append(f"{_fmt(v.real)} {_fmt(v.imag)}")
        else:
            for v in values:
                lines.append(_fmt(v))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


class _Reader:
    def __init__(self, path):
        with open(path, "r", encoding="ascii") as fh:
            self.lines = fh.read().splitlines()
        self.pos = 0

    def next(self, what):
        while self.pos < len(self.lines) and not self.lines[self.pos].strip():
            self.pos += 1
        if self.pos >= len(self.lines):
            raise MeshFormatError(f"unexpected end of file, expected {what}",
                                  line=len(self.lines))
        self.pos += 1
        return self.lines[self.pos - 1].strip(), self.pos

    def peek(self):
        while self.pos < len(self.lines) and not self.lines[self.pos].strip():
            self.pos += 1
        if self.pos >= len(self.lines):
            return None
        return self.lines[self.pos].strip()


def load_mesh(path):
    """Read a perfomesh v1 file back into a Mesh."""
    r = _Reader(path)
    header, ln = r.next("format header")
    if header != FORMAT_HEADER:
        raise MeshFormatError(f"unsupported format header {header!r}", line=ln)

    def expect_count(keyword):
        text, ln = r.next(f"{keyword} count")
        parts = text.split()
        if len(parts) != 2 or parts[0] != keyword:
            raise MeshFormatError(f"expected '{keyword} N', got {text!r}", line=ln)
        try:
            return int(parts[1])
        except ValueError:
            raise MeshFormatError(f"bad count in {text!r}", line=ln) from None

    n_nodes = expect_count("nodes")
    coords = []
    dim = None
    for _ in range(n_nodes):
        text, ln = r.next("node coordinates")
        vals = text.split()
        if dim is None:
            dim = len(vals)
            if dim not in (2, 3):
                raise MeshFormatError(f"nodes must have 2 or 3 coordinates, got {dim}", line=ln)
        if len(vals) != dim:
            raise MeshFormatError(f"expected {dim} coordinates, got {len(vals)}", line=ln)
        try:
            coords.append([float(v) for v in vals])
        except ValueError:
            raise MeshFormatError(f"bad coordinate in {text!r}", line=ln) from None
    if dim is None:
        raise MeshFormatError("mesh has no nodes", line=r.pos)

    n_cells = expect_count("cells")
    cells = []
    for _ in range(n_cells):
        text, ln = r.next("cell connectivity")
        vals = text.split()
        if len(vals) != dim + 1:
            raise MeshFormatError(f"expected {dim + 1} node indices, got {len(vals)}", line=ln)
        try:
            cells.append([int(v) for v in vals])
        except ValueError:
            raise MeshFormatError(f"bad index in {text!r}", line=ln) from None

    groups, periodic, fields = {}, {}, {}
    while True:
        head = r.peek()
        if head is None:
            break
        parts = head.split()
        keyword = parts[0]
        if keyword == "group":
            _, ln = r.next("group header")
            if len(parts) != 3:
                raise MeshFormatError(f"expected 'group <name> K', got {head!r}", line=ln)
            name, count = parts[1], int(parts[2])
            facets = []
            for _ in range(count):
                text, ln = r.next("facet")
                vals = text.split()
                if len(vals) != dim:
                    raise MeshFormatError(f"facet needs {dim} indices, got {len(vals)}", line=ln)
                facets.append([int(v) for v in vals])
            groups[name] = np.array(facets, dtype=np.int64).reshape(-1, dim)
        elif keyword == "periodic":
            _, ln = r.next("periodic header")
            if len(parts) != 3:
                raise MeshFormatError(f"expected 'periodic <dir> K', got {head!r}", line=ln)
            name, count = parts[1], int(parts[2])
            pairs = []
            for _ in range(count):
                text, ln = r.next("periodic pair")
                vals = text.split()
                if len(vals) != 2:
                    raise MeshFormatError("periodic pair needs 2 indices", line=ln)
                pairs.append([int(v) for v in vals])
            periodic[name] = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        elif keyword == "field":
            _, ln = r.next("field header")
            if len(parts) != 4:
                raise MeshFormatError(f"expected 'field <name> <kind> N', got {head!r}", line=ln)
            name, kind, count = parts[1], parts[2], int(parts[3])
            if kind not in ("real", "complex"):
                raise MeshFormatError(f"unknown field kind {kind!r}", line=ln)
            vals = []
            for _ in range(count):
                text, ln = r.next("field value")
                toks = text.split()
                try:
                    if kind == "complex":
                        if len(toks) != 2:
                            raise ValueError
                        vals.append(complex(float(toks[0]), float(toks[1])))
                    else:
                        if len(toks) != 1:
                            raise ValueError
                        vals.append(float(toks[0]))
                except ValueError:
                    raise MeshFormatError(f"bad field value {text!r}", line=ln) from None
            fields[name] = np.array(vals)
        else:
            raise MeshFormatError(f"unknown block {head!r}", line=r.pos + 1)

    try:
        return Mesh(dim, np.array(coords), np.array(cells, dtype=np.int64).reshape(-1, dim + 1),
                    groups, periodic, fields)
    except MeshError as exc:
        raise MeshFormatError(str(exc)) from exc
