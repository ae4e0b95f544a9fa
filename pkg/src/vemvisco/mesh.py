"""Polygonal meshes on the unit square: generators, geometry and text I/O.

Cells are stored as counter-clockwise vertex loops. Edges are derived from
the cell loops; hanging nodes are ordinary (collinear) polygon vertices, so
neighbouring cells always reference identical edge chains.
"""

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import DegenerateCellError, MeshFormatError, MeshValidationError

MERGE_TOL = 1e-10 * math.sqrt(2.0)  # vertex merge tolerance, 1e-10 * domain diameter
BOUNDARY_TOL = 1e-9


class BoundaryTag(IntEnum):
    INTERIOR = 0
    GAMMA_U = 1      # velocity (essential-for-primal) boundary
    GAMMA_SIGMA = 2  # traction boundary; stress edge DoFs are constrained here


@dataclass(frozen=True)
class Edge:
    vertices: tuple          # (a, b) with a < b
    cells: tuple             # adjacent cell indices, length 1 or 2
    tag: BoundaryTag


@dataclass(frozen=True)
class PolygonalMesh:
    vertices: np.ndarray     # (V, 2)
    cells: tuple             # tuple of tuples of vertex indices, CCW
    edges: tuple             # tuple of Edge
    edge_index: dict = field(repr=False)   # (a, b) sorted pair -> edge id
    cell_edges: tuple = field(repr=False)  # per cell: tuple of edge ids, loop order

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def num_edges(self):
        return len(self.edges)

    def cell_coords(self, c):
        return self.vertices[list(self.cells[c])]

    def boundary_edges(self):
        return [i for i, e in enumerate(self.edges) if len(e.cells) == 1]


@dataclass(frozen=True)
class CellGeometry:
    area: float
    centroid: np.ndarray
    diameter: float
    edge_lengths: np.ndarray
    edge_midpoints: np.ndarray
    edge_normals: np.ndarray  # outward unit normals, loop order


@dataclass(frozen=True)
class MeshQualityReport:
    min_edge_ratio: float     # min over cells of min_F h_F / h_K
    min_inradius_ratio: float  # min over cells of (2|K| / perimeter) / h_K
    max_cell_vertices: int


def shoelace_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(pts):
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


def cell_geometry(mesh, c):
    """Area, centroid, diameter and per-edge data for one cell."""
    pts = mesh.cell_coords(c)
    area = shoelace_area(pts)
    if area <= 1e-14:
        raise DegenerateCellError(f"cell {c} has area {area}")
    centroid = polygon_centroid(pts)
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    diameter = math.sqrt(float(d2.max()))
    nxt = np.roll(pts, -1, axis=0)
    tv = nxt - pts
    lengths = np.linalg.norm(tv, axis=1)
    mids = 0.5 * (pts + nxt)
    tangents = tv / lengths[:, None]
    normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1)  # right of CCW travel
    return CellGeometry(area, centroid, diameter, lengths, mids, normals)


def quality_report(mesh):
    min_ratio = 1.0
    min_inr = 1.0
    max_nv = 0
    for c in range(mesh.num_cells):
        g = cell_geometry(mesh, c)
        min_ratio = min(min_ratio, float(g.edge_lengths.min()) / g.diameter)
        min_inr = min(min_inr, (2.0 * g.area / float(g.edge_lengths.sum())) / g.diameter)
        max_nv = max(max_nv, len(mesh.cells[c]))
    return MeshQualityReport(min_ratio, min_inr, max_nv)


# ---------------------------------------------------------------------------
# mesh assembly from raw polygon soup


class _VertexMerger:
    """Merges coincident points with a tolerance via spatial hashing."""

    def __init__(self, tol=MERGE_TOL):
        self.tol = tol
        self.points = []
        self.bins = {}

    def add(self, p):
        ix, iy = round(p[0] / self.tol), round(p[1] / self.tol)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for idx in self.bins.get((ix + dx, iy + dy), ()):
                    q = self.points[idx]
                    if abs(q[0] - p[0]) <= self.tol and abs(q[1] - p[1]) <= self.tol:
                        return idx
        idx = len(self.points)
        self.points.append((float(p[0]), float(p[1])))
        self.bins.setdefault((ix, iy), []).append(idx)
        return idx


def _default_tag_rule(p0, p1):
    if abs(p0[0]) < BOUNDARY_TOL and abs(p1[0]) < BOUNDARY_TOL:
        return BoundaryTag.GAMMA_SIGMA
    if abs(p0[1]) < BOUNDARY_TOL and abs(p1[1]) < BOUNDARY_TOL:
        return BoundaryTag.GAMMA_SIGMA
    return BoundaryTag.GAMMA_U


def _tag_rule(boundary):
    if callable(boundary):
        return boundary
    if boundary == "default":
        return _default_tag_rule
    if boundary == "all-dirichlet":
        return lambda p0, p1: BoundaryTag.GAMMA_U
    raise ValueError(f"unknown boundary mode {boundary!r}")


def build_mesh(polygons, boundary="default", merge_tol=MERGE_TOL):
    """Assemble a PolygonalMesh from a list of CCW coordinate loops."""
    rule = _tag_rule(boundary)
    merger = _VertexMerger(merge_tol)
    cells = []
    for loop in polygons:
        idx = []
        for p in loop:
            i = merger.add(p)
            if not idx or i != idx[-1]:
                idx.append(i)
        if len(idx) > 1 and idx[0] == idx[-1]:
            idx.pop()
        if len(idx) < 3:
            raise MeshValidationError("cell collapsed to fewer than 3 vertices")
        cells.append(tuple(idx))
    vertices = np.array(merger.points)
    return _finalize(vertices, cells, rule)


def _finalize(vertices, cells, rule):
    fixed = []
    for loop in cells:
        pts = vertices[list(loop)]
        a = shoelace_area(pts)
        if a <= 1e-14:
            raise MeshValidationError("cell with non-positive area")
        fixed.append(tuple(loop))
    cells = fixed

    adjacency = {}
    for c, loop in enumerate(cells):
        for i in range(len(loop)):
            a, b = loop[i], loop[(i + 1) % len(loop)]
            key = (a, b) if a < b else (b, a)
            adjacency.setdefault(key, []).append(c)

    edges = []
    edge_index = {}
    for key in sorted(adjacency):
        adj = adjacency[key]
        if len(adj) > 2:
            raise MeshValidationError(f"edge {key} shared by {len(adj)} cells")
        if len(adj) == 1:
            tag = rule(vertices[key[0]], vertices[key[1]])
            if tag == BoundaryTag.INTERIOR:
                raise MeshValidationError(f"boundary edge {key} tagged INTERIOR")
        else:
            tag = BoundaryTag.INTERIOR
        edge_index[key] = len(edges)
        edges.append(Edge(key, tuple(adj), BoundaryTag(tag)))

    cell_edges = []
    for loop in cells:
        ids = []
        for i in range(len(loop)):
            a, b = loop[i], loop[(i + 1) % len(loop)]
            ids.append(edge_index[(a, b) if a < b else (b, a)])
        cell_edges.append(tuple(ids))

    return PolygonalMesh(vertices, tuple(cells), tuple(edges), edge_index,
                         tuple(cell_edges))


# ---------------------------------------------------------------------------
# generators


def generate_cartesian(n, boundary="default"):
    """n x n mesh of axis-aligned squares on the unit square."""
    if n < 1:
        raise ValueError("generate_cartesian requires n >= 1")
    h = 1.0 / n
    polys = []
    for j in range(n):
        for i in range(n):
            x0, y0 = i * h, j * h
            x1, y1 = (i + 1) * h, (j + 1) * h
            polys.append([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    return build_mesh(polys, boundary)


def clip_polygon(poly, axis, level, keep_below):
    """Sutherland-Hodgman clip of a coordinate loop against an axis line."""
    out = []
    m = len(poly)
    for i in range(m):
        p, q = poly[i], poly[(i + 1) % m]
        pin = (p[axis] <= level) if keep_below else (p[axis] >= level)
        qin = (q[axis] <= level) if keep_below else (q[axis] >= level)
        if pin:
            out.append(p)
        if pin != qin:
            t = (level - p[axis]) / (q[axis] - p[axis])
            r = (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))
            out.append(r)
    return out


def clip_to_unit_square(poly):
    for axis, level, below in ((0, 0.0, False), (0, 1.0, True),
                               (1, 0.0, False), (1, 1.0, True)):
        poly = clip_polygon(poly, axis, level, below)
        if len(poly) < 3:
            return []
    return poly


def generate_hexagonal(n, boundary="default"):
    """Tiling of the unit square by a clipped honeycomb with horizontal pitch 1/n.

    Rows are spaced so that the top row of hexagon tips lands exactly on y=1;
    the leftover corners are filled by exact triangles, and the x=0 / x=1
    boundaries cut alternate rows into half-hexagon quads. All boundary cells
    are therefore well-shaped (no slivers).
    """
    if n < 2:
        raise ValueError("generate_hexagonal requires n >= 2")
    w = 0.5 / n                                       # half of the horizontal pitch
    m = max(2, round((2.0 * math.sqrt(3.0) * n - 2.0) / 3.0))
    ry = 2.0 / (3 * m + 2)                            # vertical circumradius
    polys = []
    for j in range(0, m + 2):
        cy = 1.5 * ry * j
        off = 0.0 if j % 2 == 0 else w
        for i in range(-1, n + 1):
            cx = off + i / n
            hexagon = [(cx, cy + ry), (cx - w, cy + 0.5 * ry), (cx - w, cy - 0.5 * ry),
                       (cx, cy - ry), (cx + w, cy - 0.5 * ry), (cx + w, cy + 0.5 * ry)]
            clipped = clip_to_unit_square(hexagon)
            if len(clipped) >= 3 and shoelace_area(np.array(clipped)) > 1e-12:
                polys.append(clipped)
    return build_mesh(polys, boundary, merge_tol=1e-9)


def generate_partitioned(n_left, n_right, boundary="default"):
    """Two cartesian half-meshes glued at x=1/2, producing hanging nodes.

    The left half uses squares of side 1/(2*n_left), the right half
    1/(2*n_right); interface vertices of the finer side become extra collinear
    vertices of the coarser cells.
    """
    if n_left < 1 or n_right < 1:
        raise ValueError("partition sizes must be >= 1")
    if n_left == n_right:
        raise ValueError("n_left == n_right produces no hanging nodes")

    interface_ys = sorted({j / (2.0 * n_left) for j in range(2 * n_left + 1)}
                          | {j / (2.0 * n_right) for j in range(2 * n_right + 1)})

    def half(nh, x_lo, x_hi):
        a = 1.0 / (2.0 * nh)
        cols = nh
        rows = 2 * nh
        out = []
        for j in range(rows):
            for i in range(cols):
                x0, x1 = x_lo + i * a, x_lo + (i + 1) * a
                y0, y1 = j * a, (j + 1) * a
                loop = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
                out.append(_insert_interface_nodes(loop, interface_ys))
        return out

    def _insert_interface_nodes(loop, ys):
        out = []
        m = len(loop)
        for i in range(m):
            p, q = loop[i], loop[(i + 1) % m]
            out.append(p)
            if abs(p[0] - 0.5) < 1e-12 and abs(q[0] - 0.5) < 1e-12:
                lo, hi = (p[1], q[1]) if p[1] < q[1] else (q[1], p[1])
                inner = [y for y in ys if lo + 1e-12 < y < hi - 1e-12]
                if p[1] > q[1]:
                    inner = inner[::-1]
                out.extend((0.5, y) for y in inner)
        return out

    polys = half(n_left, 0.0, 0.5) + half(n_right, 0.5, 1.0)
    return build_mesh(polys, boundary)


def reported_mesh_size(mesh, kind=None):
    """Mesh size h used in convergence tables.

    For cartesian meshes this is the cell side (so n=6 reports 1/6); otherwise
    the maximum cell diameter.
    """
    hmax = max(cell_geometry(mesh, c).diameter for c in range(mesh.num_cells))
    if kind == "cartesian":
        return hmax / math.sqrt(2.0)
    return hmax


# ---------------------------------------------------------------------------
# text format I/O


def write_mesh(mesh, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("vemmesh 1\n")
        f.write(f"{mesh.num_vertices} {mesh.num_cells} {mesh.num_edges}\n")
        for x, y in mesh.vertices:
            f.write(f"{float(x)!r} {float(y)!r}\n")
        for loop in mesh.cells:
            f.write(str(len(loop)) + " " + " ".join(map(str, loop)) + "\n")
        for e in mesh.edges:
            f.write(f"{e.vertices[0]} {e.vertices[1]} {int(e.tag)}\n")


def read_mesh(path):
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()

    def fail(ln, msg):
        raise MeshFormatError(ln + 1, msg)

    if not lines or lines[0].strip() != "vemmesh 1":
        fail(0, "expected header 'vemmesh 1'")
    try:
        nv, nc, ne = map(int, lines[1].split())
    except (IndexError, ValueError):
        fail(1, "expected counts '<V> <C> <E>'")
    if len(lines) < 2 + nv + nc + ne:
        fail(len(lines) - 1, "file truncated")

    verts = np.empty((nv, 2))
    for i in range(nv):
        try:
            x, y = map(float, lines[2 + i].split())
        except ValueError:
            fail(2 + i, "expected 'x y'")
        verts[i] = (x, y)

    cells = []
    for i in range(nc):
        ln = 2 + nv + i
        try:
            parts = list(map(int, lines[ln].split()))
            m, idx = parts[0], parts[1:]
        except (IndexError, ValueError):
            fail(ln, "expected 'm i1 ... im'")
        if len(idx) != m or m < 3:
            fail(ln, "bad cell vertex count")
        if any(j < 0 or j >= nv for j in idx):
            raise MeshValidationError(f"cell on line {ln + 1} references missing vertex")
        cells.append(tuple(idx))

    tags = {}
    for i in range(ne):
        ln = 2 + nv + nc + i
        try:
            a, b, t = map(int, lines[ln].split())
        except ValueError:
            fail(ln, "expected 'a b t'")
        if t not in (0, 1, 2):
            fail(ln, f"unknown tag {t}")
        if any(j < 0 or j >= nv for j in (a, b)):
            raise MeshValidationError(f"edge on line {ln + 1} references missing vertex")
        tags[(a, b) if a < b else (b, a)] = BoundaryTag(t)

    def rule_from_file(p0, p1):
        # resolved below through the tag table; placeholder for _finalize
        return BoundaryTag.GAMMA_U

    mesh = _finalize(verts, cells, rule_from_file)
    # re-apply the stored tags, validating consistency with adjacency
    edges = []
    for e in mesh.edges:
        tag = tags.get(e.vertices)
        if tag is None:
            raise MeshValidationError(f"edge {e.vertices} missing from file")
        if len(e.cells) == 2 and tag != BoundaryTag.INTERIOR:
            raise MeshValidationError(f"interior edge {e.vertices} carries boundary tag")
        if len(e.cells) == 1 and tag == BoundaryTag.INTERIOR:
            raise MeshValidationError(f"boundary edge {e.vertices} untagged")
        edges.append(Edge(e.vertices, e.cells, tag))
    return PolygonalMesh(mesh.vertices, mesh.cells, tuple(edges), mesh.edge_index,
                         mesh.cell_edges)
