"""Triangulations of the treatment domain and structured test meshes.

The treatment domain is the rectangle [-0.04, 0.04] x [0, 0.12] (metres)
joined below x2 = 0 with a circular-arc cap: the part of the disk of
radius 0.05 centred at (0, 0.03) lying below the x1 axis.  The arc meets
the rectangle corners (+-0.04, 0) tangentially (sqrt(0.05^2 - 0.03^2) =
0.04) and its lowest point is (0, -0.02).  The union is convex.

Boundary tags:

* ``GammaA`` - the top edge x2 = 0.12 (outflow in the transport model),
* ``GammaB`` - the arc below x2 = 0 (excitation / inflow),
* ``Wall``  - the two vertical sides.

Generation strategy: structured seed points in offset (triangular-lattice)
rows, boundary points placed exactly on the geometry (arc points on the
circle), Delaunay triangulation, and a few Laplacian smoothing sweeps of
the interior points.  Because the domain is convex, the Delaunay
triangulation of the seeds tiles the inscribed polygon exactly.

Mesh files are a small ASCII format::

    hifumesh 1
    V <nv>
    <x1> <x2>          one vertex per line, 17 significant digits
    T <nt>
    <i> <j> <k>        0-based vertex indices, counterclockwise
    B <nb>
    <i> <j> <TAG>      boundary edges, domain on the left

Everything is deterministic: identical inputs give byte-identical files.
"""
import math

import numpy as np
from scipy.spatial import Delaunay

from .errors import MeshError, ParseError

GAMMA_A = "GammaA"
GAMMA_B = "GammaB"
WALL = "Wall"

RECT_HALF_WIDTH = 0.04
RECT_TOP = 0.12
ARC_CENTER = (0.0, 0.03)
ARC_RADIUS = 0.05
ARC_BOTTOM = -0.02
ARC_HALF_ANGLE = math.asin(RECT_HALF_WIDTH / ARC_RADIUS)

MIN_ANGLE_DEG = 20.0

_FMT = "%.17g"


class Mesh:
    """Conforming triangle mesh with tagged boundary edges.

    vertices  : (nv, 2) float64
    triangles : (nt, 3) int64, counterclockwise
    edges     : (nb, 2) int64, boundary edges oriented with the domain on
                the left (outward normal = (t2, -t1) for tangent t)
    edge_tags : (nb,) int64 codes into tag_names
    tag_names : tuple of str
    """

    def __init__(self, vertices, triangles, edges, edge_tags, tag_names):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.edges = np.ascontiguousarray(edges, dtype=np.int64)
        self.edge_tags = np.ascontiguousarray(edge_tags, dtype=np.int64)
        self.tag_names = tuple(tag_names)
        self._assembler = None

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    def tag_code(self, name):
        try:
            return self.tag_names.index(name)
        except ValueError:
            raise MeshError(f"mesh has no boundary tag {name!r}; "
                            f"tags are {self.tag_names}") from None

    def boundary_edges(self, name):
        """Boundary edges carrying the given tag, (k, 2) vertex indices."""
        return self.edges[self.edge_tags == self.tag_code(name)]

    def triangle_areas(self):
        p = self.vertices
        t = self.triangles
        d1 = p[t[:, 1]] - p[t[:, 0]]
        d2 = p[t[:, 2]] - p[t[:, 0]]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def min_angle_deg(self):
        p = self.vertices
        t = self.triangles
        angs = np.empty((t.shape[0], 3))
        for i in range(3):
            a = p[t[:, (i + 1) % 3]] - p[t[:, i]]
            b = p[t[:, (i + 2) % 3]] - p[t[:, i]]
            na = np.hypot(a[:, 0], a[:, 1])
            nb = np.hypot(b[:, 0], b[:, 1])
            cosv = (a * b).sum(axis=1) / (na * nb)
            angs[:, i] = np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0)))
        return float(angs.min())


def _orient_ccw(points, tris):
    d1 = points[tris[:, 1]] - points[tris[:, 0]]
    d2 = points[tris[:, 2]] - points[tris[:, 0]]
    flip = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0.0
    tris = tris.copy()
    tris[flip, 1], tris[flip, 2] = tris[flip, 2].copy(), tris[flip, 1].copy()
    return tris


def _boundary_edges_of(tris):
    """Edges belonging to exactly one triangle, in triangle orientation."""
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]],
                            tris[:, [2, 0]]])
    key = np.sort(edges, axis=1)
    order = np.lexsort((key[:, 1], key[:, 0]))
    ks = key[order]
    dup = np.ones(ks.shape[0], dtype=bool)
    same = (ks[1:] == ks[:-1]).all(axis=1)
    dup[1:][same] = False
    dup[:-1][same] = False
    return edges[order[dup]]


def _smooth(points, n_boundary, sweeps):
    """Laplacian smoothing of points[n_boundary:] (boundary listed first)."""
    for _ in range(sweeps):
        tri = Delaunay(points)
        indptr, nbrs = tri.vertex_neighbor_vertices
        new = points.copy()
        for i in range(n_boundary, points.shape[0]):
            nb = nbrs[indptr[i]:indptr[i + 1]]
            if nb.shape[0]:
                new[i] = points[nb].mean(axis=0)
        points = new
    return points


def _arc_point(phi):
    return (ARC_CENTER[0] + ARC_RADIUS * math.sin(phi),
            ARC_CENTER[1] - ARC_RADIUS * math.cos(phi))


def _on_arc(pts, tol=1e-9):
    r2 = (pts[:, 0] - ARC_CENTER[0]) ** 2 + (pts[:, 1] - ARC_CENTER[1]) ** 2
    return np.abs(r2 - ARC_RADIUS ** 2) <= tol * ARC_RADIUS ** 2


def build_domain_mesh(target, smoothing_sweeps=2):
    """Mesh the treatment domain with edge lengths near ``target`` (m).

    Returns a validated Mesh; raises MeshError when the requested size is
    unusable or the resulting quality is below the 20-degree minimum-angle
    floor.
    """
    target = float(target)
    if not 0.0 < target <= 0.04:
        raise MeshError(f"target edge length must lie in (0, 0.04], "
                        f"got {target}")
    dx = 2.0 * RECT_HALF_WIDTH / max(2, round(2.0 * RECT_HALF_WIDTH / target))
    nrow = max(2, round(RECT_TOP / (target * math.sqrt(3.0) / 2.0)))
    dy = RECT_TOP / nrow
    nx = int(round(2.0 * RECT_HALF_WIDTH / dx))

    boundary = []
    interior = []

    # rectangle rows (y = 0 row is interior except its corner endpoints)
    for k in range(nrow + 1):
        y = RECT_TOP * k / nrow
        top = (k == nrow)
        if k % 2 == 0:
            xs = [-RECT_HALF_WIDTH + dx * i for i in range(nx + 1)]
        else:
            xs = [-RECT_HALF_WIDTH] \
                + [-RECT_HALF_WIDTH + dx * (i + 0.5) for i in range(nx)] \
                + [RECT_HALF_WIDTH]
        for x in xs:
            on_wall = abs(abs(x) - RECT_HALF_WIDTH) < 1e-15
            if top or on_wall:
                boundary.append((x, y))
            else:
                interior.append((x, y))

    # transducer arc, uniform in angle, endpoints exactly at the corners
    narc = max(4, int(round(2.0 * ARC_HALF_ANGLE * ARC_RADIUS / target)))
    for i in range(1, narc):
        phi = -ARC_HALF_ANGLE + 2.0 * ARC_HALF_ANGLE * i / narc
        boundary.append(_arc_point(phi))

    # cap interior rows
    ncap = max(1, int(round(-ARC_BOTTOM / dy)))
    for k in range(1, ncap):
        y = ARC_BOTTOM * k / ncap
        w = math.sqrt(ARC_RADIUS ** 2 - (y - ARC_CENTER[1]) ** 2)
        m = int(round(2.0 * w / dx))
        for i in range(1, m):
            interior.append((-w + 2.0 * w * i / m, y))

    bpts = np.array(boundary)
    ipts = np.array(interior).reshape(-1, 2)

    # keep interior points clear of the boundary polyline
    if ipts.shape[0]:
        d2 = ((ipts[:, None, :] - bpts[None, :, :]) ** 2).sum(axis=2)
        keep = d2.min(axis=1) >= (0.45 * dx) ** 2
        ipts = ipts[keep]

    points = np.concatenate([bpts, ipts])
    points = _smooth(points, bpts.shape[0], smoothing_sweeps)
    tri = Delaunay(points)
    tris = _orient_ccw(points, tri.simplices.astype(np.int64))

    mesh = _finish_domain_mesh(points, tris)
    quality = mesh.min_angle_deg()
    if quality < MIN_ANGLE_DEG:
        raise MeshError(f"mesh quality too low: minimum angle "
                        f"{quality:.2f} deg < {MIN_ANGLE_DEG} deg at "
                        f"target {target}")
    validate_mesh(mesh)
    return mesh


def _finish_domain_mesh(points, tris):
    edges = _boundary_edges_of(tris)
    tag_names = (GAMMA_A, GAMMA_B, WALL)
    mids = 0.5 * (points[edges[:, 0]] + points[edges[:, 1]])
    on_top = (np.abs(points[edges[:, 0], 1] - RECT_TOP) < 1e-12) \
        & (np.abs(points[edges[:, 1], 1] - RECT_TOP) < 1e-12)
    on_arc = _on_arc(points[edges[:, 0]]) & _on_arc(points[edges[:, 1]]) \
        & (mids[:, 1] <= 1e-12)
    codes = np.full(edges.shape[0], 2, dtype=np.int64)
    codes[on_top] = 0
    codes[on_arc & ~on_top] = 1
    return Mesh(points, tris, edges, codes, tag_names)


def build_rectangle_mesh(x0, x1, y0, y1, nx, ny, pattern="diagonal",
                         tag_names=("left", "right", "bottom", "top")):
    """Structured rectangle mesh for tests and verification runs.

    ``pattern="diagonal"`` splits each cell along one diagonal (2 triangles
    per cell); ``pattern="crossed"`` adds cell centres (4 triangles per
    cell) and is left-right symmetric.
    """
    if not (x1 > x0 and y1 > y0):
        raise MeshError("rectangle bounds must satisfy x1 > x0, y1 > y0")
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise MeshError("rectangle mesh needs nx, ny >= 1")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    if pattern == "diagonal":
        for i in range(nx):
            for j in range(ny):
                a, b = vid(i, j), vid(i + 1, j)
                c, d = vid(i + 1, j + 1), vid(i, j + 1)
                tris.append((a, b, c))
                tris.append((a, c, d))
    elif pattern == "crossed":
        centres = []
        base = pts.shape[0]
        for i in range(nx):
            for j in range(ny):
                a, b = vid(i, j), vid(i + 1, j)
                c, d = vid(i + 1, j + 1), vid(i, j + 1)
                e = base + len(centres)
                centres.append((0.5 * (xs[i] + xs[i + 1]),
                                0.5 * (ys[j] + ys[j + 1])))
                tris += [(a, b, e), (b, c, e), (c, d, e), (d, a, e)]
        pts = np.concatenate([pts, np.array(centres)])
    else:
        raise MeshError(f"unknown pattern {pattern!r}")

    tris = _orient_ccw(pts, np.array(tris, dtype=np.int64))
    edges = _boundary_edges_of(tris)
    mids = 0.5 * (pts[edges[:, 0]] + pts[edges[:, 1]])
    tol = 1e-12 * max(x1 - x0, y1 - y0)
    codes = np.empty(edges.shape[0], dtype=np.int64)
    codes[np.abs(mids[:, 0] - x0) < tol] = 0
    codes[np.abs(mids[:, 0] - x1) < tol] = 1
    codes[np.abs(mids[:, 1] - y0) < tol] = 2
    codes[np.abs(mids[:, 1] - y1) < tol] = 3
    mesh = Mesh(pts, tris, edges, codes, tag_names)
    validate_mesh(mesh)
    return mesh


def validate_mesh(mesh):
    """Structural sanity: positive areas, closed tagged boundary, Euler."""
    nv = mesh.num_vertices
    if mesh.triangles.min(initial=0) < 0 or \
            mesh.triangles.max(initial=-1) >= nv:
        raise MeshError("triangle vertex index out of range")
    areas = mesh.triangle_areas()
    if not (areas > 0.0).all():
        raise MeshError("non-positive triangle area (orientation or "
                        "degenerate element)")
    tris = mesh.triangles
    all_edges = np.sort(np.concatenate(
        [tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(all_edges, axis=0, return_counts=True)
    if counts.max(initial=2) > 2:
        raise MeshError("edge shared by more than two triangles")
    n_edges = uniq.shape[0]
    euler = nv - n_edges + tris.shape[0]
    if euler != 1:
        raise MeshError(f"Euler characteristic {euler} != 1 (holes or "
                        f"disconnected pieces)")
    n_bnd = int((counts == 1).sum())
    if mesh.edges.shape[0] != n_bnd:
        raise MeshError("stored boundary edge count does not match the "
                        "triangulation")
    # closed loop: every boundary vertex has exactly one incoming and one
    # outgoing boundary edge
    heads = np.bincount(mesh.edges[:, 0], minlength=nv)
    tails = np.bincount(mesh.edges[:, 1], minlength=nv)
    if not ((heads <= 1).all() and (tails <= 1).all()
            and (heads == tails).all()):
        raise MeshError("boundary edges do not form simple closed loops")
    if mesh.edge_tags.min(initial=0) < 0 or \
            mesh.edge_tags.max(initial=-1) >= len(mesh.tag_names):
        raise MeshError("boundary tag code out of range")


def save_mesh(mesh, path):
    """Write the ASCII mesh format (byte-deterministic)."""
    lines = ["hifumesh 1", f"V {mesh.num_vertices}"]
    for x, y in mesh.vertices:
        lines.append(f"{_FMT % x} {_FMT % y}")
    lines.append(f"T {mesh.num_triangles}")
    for a, b, c in mesh.triangles:
        lines.append(f"{a} {b} {c}")
    lines.append(f"B {mesh.edges.shape[0]}")
    for (a, b), code in zip(mesh.edges, mesh.edge_tags):
        lines.append(f"{a} {b} {mesh.tag_names[code]}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path):
    """Parse the ASCII mesh format; raises ParseError with line numbers."""
    with open(path) as fh:
        lines = fh.read().splitlines()

    def need(idx):
        if idx >= len(lines):
            raise ParseError("unexpected end of file", line=len(lines) + 1)
        return lines[idx]

    if need(0).strip() != "hifumesh 1":
        raise ParseError("expected header 'hifumesh 1'", line=1)

    def read_count(idx, letter):
        parts = need(idx).split()
        if len(parts) != 2 or parts[0] != letter:
            raise ParseError(f"expected '{letter} <count>'", line=idx + 1)
        try:
            n = int(parts[1])
        except ValueError:
            raise ParseError(f"bad count {parts[1]!r}", line=idx + 1) \
                from None
        if n < 0:
            raise ParseError("negative count", line=idx + 1)
        return n

    ln = 1
    nv = read_count(ln, "V")
    verts = np.empty((nv, 2))
    for i in range(nv):
        parts = need(ln + 1 + i).split()
        if len(parts) != 2:
            raise ParseError("expected two coordinates", line=ln + 2 + i)
        try:
            verts[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise ParseError(f"bad coordinate in {parts}", line=ln + 2 + i) \
                from None
    ln += 1 + nv
    nt = read_count(ln, "T")
    tris = np.empty((nt, 3), dtype=np.int64)
    for i in range(nt):
        parts = need(ln + 1 + i).split()
        if len(parts) != 3:
            raise ParseError("expected three vertex indices",
                             line=ln + 2 + i)
        try:
            tris[i] = [int(p) for p in parts]
        except ValueError:
            raise ParseError(f"bad index in {parts}", line=ln + 2 + i) \
                from None
    ln += 1 + nt
    nb = read_count(ln, "B")
    edges = np.empty((nb, 2), dtype=np.int64)
    tag_names = []
    codes = np.empty(nb, dtype=np.int64)
    for i in range(nb):
        parts = need(ln + 1 + i).split()
        if len(parts) != 3:
            raise ParseError("expected 'i j TAG'", line=ln + 2 + i)
        try:
            edges[i] = [int(parts[0]), int(parts[1])]
        except ValueError:
            raise ParseError(f"bad index in {parts}", line=ln + 2 + i) \
                from None
        tag = parts[2]
        if tag not in tag_names:
            tag_names.append(tag)
        codes[i] = tag_names.index(tag)
    mesh = Mesh(verts, tris, edges, codes, tuple(tag_names))
    try:
        validate_mesh(mesh)
    except MeshError as exc:
        raise ParseError(f"mesh fails validation: {exc}",
                         line=len(lines)) from None
    return mesh


def domain_area():
    """Exact area of the treatment domain (rectangle + circular segment)."""
    seg = ARC_RADIUS ** 2 * (2.0 * ARC_HALF_ANGLE
                             - math.sin(2.0 * ARC_HALF_ANGLE)) / 2.0
    return 2.0 * RECT_HALF_WIDTH * RECT_TOP + seg
