"""Interface-resolving triangulations of rectangular domains.

Meshes are structured right-triangle subdivisions of an axis-aligned
rectangle, with a second axis-aligned rectangle ("interface box") whose
boundary carries the internal interface.  Every triangle lies entirely
inside or outside the box, so the triangulation resolves the interface by
construction.  Uniform (red) refinement keeps meshes nested, which the
two-grid machinery relies on.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Mesh",
    "AngleReport",
    "MeshError",
    "InvalidSubdivision",
    "InterfaceNotResolved",
    "ParseError",
    "ValidationError",
    "generate_interface_mesh",
    "refine_uniform",
    "check_angle_condition",
    "validate_mesh",
    "save_mesh",
    "load_mesh",
]

ANGLE_TOL_FACTOR = 1e-12  # scaled by the largest stiffness diagonal entry


class MeshError(Exception):
    """Base class for mesh construction and validation failures."""


class InvalidSubdivision(MeshError):
    pass


class InterfaceNotResolved(MeshError):
    pass


class ValidationError(MeshError):
    pass


class ParseError(MeshError):
    def __init__(self, message, line_number):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(eq=False)
class Mesh:
    """Conforming P1 triangulation with region tags and interface edges.

    Attributes
    ----------
    vertices : (N, 2) float array
    triangles : (M, 3) int array, counterclockwise vertex triples
    regions : (M,) int array with values in {1, 2}
    boundary_vertices : sorted int array, vertices on the outer boundary
    interface_edges : (K, 2) int array, edges lying on the interface
    h : maximum element diameter
    parent : coarser mesh this one refines, or None
    midpoint_edges : (N - N_parent, 2) int array mapping each new vertex
        of a refined mesh to the parent edge it bisects, or None
    """

    vertices: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    boundary_vertices: np.ndarray
    interface_edges: np.ndarray
    h: float
    parent: "Mesh | None" = None
    midpoint_edges: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.regions = np.ascontiguousarray(self.regions, dtype=np.int64)
        self.boundary_vertices = np.ascontiguousarray(
            self.boundary_vertices, dtype=np.int64
        )
        self.interface_edges = np.ascontiguousarray(
            self.interface_edges, dtype=np.int64
        ).reshape(-1, 2)
        for arr in (
            self.vertices,
            self.triangles,
            self.regions,
            self.boundary_vertices,
            self.interface_edges,
        ):
            arr.setflags(write=False)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def interior_vertices(self):
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary_vertices] = False
        return np.nonzero(mask)[0]

    def triangle_coords(self):
        """Vertex coordinates per triangle, shape (M, 3, 2)."""
        return self.vertices[self.triangles]


@dataclass
class AngleReport:
    """Result of the stiffness off-diagonal sign audit."""

    worst_offdiag: float
    violating_pairs: list
    passes: bool
    tolerance: float


def _signed_areas(vertices, triangles):
    p = vertices[triangles]
    return 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )


def _max_diameter(vertices, triangles):
    p = vertices[triangles]
    d01 = np.hypot(p[:, 0, 0] - p[:, 1, 0], p[:, 0, 1] - p[:, 1, 1])
    d12 = np.hypot(p[:, 1, 0] - p[:, 2, 0], p[:, 1, 1] - p[:, 2, 1])
    d20 = np.hypot(p[:, 2, 0] - p[:, 0, 0], p[:, 2, 1] - p[:, 0, 1])
    return float(np.max(np.maximum(np.maximum(d01, d12), d20)))


def _edge_counts(triangles):
    """Count how many triangles use each undirected edge."""
    counts = {}
    for tri in triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(a), int(b)) if a < b else (int(b), int(a))
            counts[key] = counts.get(key, 0) + 1
    return counts


def generate_interface_mesh(n, domain=(-1.0, 1.0, -1.0, 1.0),
                            interface_box=(-0.5, 0.5, -0.5, 0.5)):
    """Build a structured right-triangle mesh resolving an interface box.

    The domain ``(xmin, xmax, ymin, ymax)`` is split into an n-by-n grid of
    cells, each cut along the lower-left/upper-right diagonal.  Triangles
    whose centroid lies inside ``interface_box`` get region tag 1, the rest
    tag 2.  The interface consists of the grid edges on the box boundary
    that do not lie on the outer boundary; a box sharing sides with the
    domain therefore degenerates to a line interface (e.g. a vertical line
    when the box spans the full height and half the width).

    Raises
    ------
    InvalidSubdivision
        if n < 2.
    InterfaceNotResolved
        if the box edges do not align with grid lines.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise InvalidSubdivision(f"need integer n >= 2, got {n!r}")
    xmin, xmax, ymin, ymax = map(float, domain)
    bx0, bx1, by0, by1 = map(float, interface_box)
    if not (xmin < xmax and ymin < ymax):
        raise InvalidSubdivision(f"empty domain {domain!r}")
    if not (xmin <= bx0 < bx1 <= xmax and ymin <= by0 < by1 <= ymax):
        raise InterfaceNotResolved(
            f"interface box {interface_box!r} not inside domain {domain!r}")

    xs = np.linspace(xmin, xmax, n + 1)
    ys = np.linspace(ymin, ymax, n + 1)

    def grid_index(coords, value, axis):
        hits = np.nonzero(np.abs(coords - value) <= 1e-12)[0]
        if hits.size != 1:
            raise InterfaceNotResolved(
                f"box {axis}-edge at {value} does not align with the "
                f"{n}x{n} grid")
        return int(hits[0])

    ix0 = grid_index(xs, bx0, "x")
    ix1 = grid_index(xs, bx1, "x")
    iy0 = grid_index(ys, by0, "y")
    iy1 = grid_index(ys, by1, "y")

    xv, yv = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([xv.ravel(), yv.ravel()])

    def vid(ix, iy):
        return iy * (n + 1) + ix

    triangles = []
    regions = []
    for iy in range(n):
        for ix in range(n):
            v00 = vid(ix, iy)
            v10 = vid(ix + 1, iy)
            v01 = vid(ix, iy + 1)
            v11 = vid(ix + 1, iy + 1)
            inside = ix0 <= ix < ix1 and iy0 <= iy < iy1
            tag = 1 if inside else 2
            triangles.append((v00, v10, v11))
            triangles.append((v00, v11, v01))
            regions.extend((tag, tag))
    triangles = np.array(triangles, dtype=np.int64)
    regions = np.array(regions, dtype=np.int64)

    bmask = np.zeros(vertices.shape[0], dtype=bool)
    for iy in range(n + 1):
        for ix in range(n + 1):
            if ix in (0, n) or iy in (0, n):
                bmask[vid(ix, iy)] = True
    boundary_vertices = np.nonzero(bmask)[0]

    # Interface edges: the box perimeter, minus any side flush with the
    # outer boundary.
    edges = []
    if ix0 > 0:
        edges += [(vid(ix0, iy), vid(ix0, iy + 1)) for iy in range(iy0, iy1)]
    if ix1 < n:
        edges += [(vid(ix1, iy), vid(ix1, iy + 1)) for iy in range(iy0, iy1)]
    if iy0 > 0:
        edges += [(vid(ix, iy0), vid(ix + 1, iy0)) for ix in range(ix0, ix1)]
    if iy1 < n:
        edges += [(vid(ix, iy1), vid(ix + 1, iy1)) for ix in range(ix0, ix1)]
    interface_edges = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)

    return Mesh(
        vertices=vertices,
        triangles=triangles,
        regions=regions,
        boundary_vertices=boundary_vertices,
        interface_edges=interface_edges,
        h=_max_diameter(vertices, triangles),
    )


def refine_uniform(mesh):
    """Red refinement: split every triangle into 4 via edge midpoints.

    Region tags are inherited, the child records the parent mesh and
    the edge bisected by every new vertex, and h halves exactly.
    """
    n_old = mesh.n_vertices
    vertices = [mesh.vertices]
    midpoint_of = {}
    midpoint_edges = []

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        idx = midpoint_of.get(key)
        if idx is None:
            idx = n_old + len(midpoint_edges)
            midpoint_of[key] = idx
            midpoint_edges.append(key)
            vertices.append(
                0.5 * (mesh.vertices[a] + mesh.vertices[b])[None, :])
        return idx

    triangles = np.empty((4 * mesh.n_triangles, 3), dtype=np.int64)
    regions = np.repeat(mesh.regions, 4)
    for t, (v0, v1, v2) in enumerate(mesh.triangles):
        m01 = midpoint(int(v0), int(v1))
        m12 = midpoint(int(v1), int(v2))
        m02 = midpoint(int(v0), int(v2))
        triangles[4 * t:4 * t + 4] = [
            (v0, m01, m02),
            (v1, m12, m01),
            (v2, m02, m12),
            (m01, m12, m02),
        ]
    all_vertices = np.vstack(vertices)

    boundary = set(int(v) for v in mesh.boundary_vertices)
    counts = _edge_counts(mesh.triangles)
    new_boundary = set(boundary)
    for (a, b), idx in midpoint_of.items():
        if counts[(a, b)] == 1:  # boundary edge
            new_boundary.add(idx)
    boundary_vertices = np.array(sorted(new_boundary), dtype=np.int64)

    iface = []
    for a, b in mesh.interface_edges:
        m = midpoint_of[(int(a), int(b)) if a < b else (int(b), int(a))]
        iface.append((min(int(a), m), max(int(a), m)))
        iface.append((min(m, int(b)), max(m, int(b))))
    interface_edges = np.array(sorted(iface), dtype=np.int64).reshape(-1, 2)

    return Mesh(
        vertices=all_vertices,
        triangles=triangles,
        regions=regions,
        boundary_vertices=boundary_vertices,
        interface_edges=interface_edges,
        h=mesh.h / 2.0,
        parent=mesh,
        midpoint_edges=np.array(midpoint_edges, dtype=np.int64),
    )


def check_angle_condition(mesh, diffusion):
    """Audit the sign of the stiffness off-diagonal entries.

    The discrete maximum principle requires a(phi_i, phi_j) <= 0 for all
    i != j.  Entries above the tolerance (1e-12 times the largest diagonal
    entry) are reported as violating pairs.  Pure diagnostic.
    """
    from .assembly import assemble_stiffness  # deferred: avoids cycle

    A = assemble_stiffness(mesh, diffusion).tocoo()
    off = A.row != A.col
    tol = ANGLE_TOL_FACTOR * float(A.data[~off].max())
    rows, cols, vals = A.row[off], A.col[off], A.data[off]
    worst = float(vals.max()) if vals.size else 0.0
    bad = vals > tol
    pairs = sorted(
        {(int(min(i, j)), int(max(i, j)))
         for i, j in zip(rows[bad], cols[bad])}
    )
    return AngleReport(
        worst_offdiag=worst,
        violating_pairs=pairs,
        passes=not pairs,
        tolerance=tol,
    )


def validate_mesh(mesh):
    """Raise ValidationError if the mesh breaks a structural invariant."""
    n = mesh.n_vertices
    if mesh.triangles.size and (
            mesh.triangles.min() < 0 or mesh.triangles.max() >= n):
        raise ValidationError("triangle references a vertex index out of range")
    if mesh.interface_edges.size and (
            mesh.interface_edges.min() < 0 or mesh.interface_edges.max() >= n):
        raise ValidationError("interface edge references a vertex out of range")
    if mesh.boundary_vertices.size and (
            mesh.boundary_vertices.min() < 0
            or mesh.boundary_vertices.max() >= n):
        raise ValidationError("boundary vertex index out of range")
    areas = _signed_areas(mesh.vertices, mesh.triangles)
    if np.any(areas <= 0):
        bad = int(np.argmax(areas <= 0))
        raise ValidationError(
            f"triangle {bad} has non-positive signed area {areas[bad]:g}")
    if not np.all(np.isin(mesh.regions, (1, 2))):
        raise ValidationError("region tags must be 1 or 2")
    for edge, count in _edge_counts(mesh.triangles).items():
        if count > 2:
            raise ValidationError(
                f"edge {edge} shared by {count} triangles (non-conforming)")
    return mesh


def save_mesh(mesh):
    """Serialize to the plain-text mesh format (full float precision)."""
    bset = set(int(v) for v in mesh.boundary_vertices)
    lines = [f"vertices {mesh.n_vertices}"]
    for i, (x, y) in enumerate(mesh.vertices):
        lines.append(f"{float(x)!r} {float(y)!r} {1 if i in bset else 0}")
    lines.append(f"triangles {mesh.n_triangles}")
    for (a, b, c), r in zip(mesh.triangles, mesh.regions):
        lines.append(f"{a} {b} {c} {r}")
    lines.append(f"interface_edges {len(mesh.interface_edges)}")
    for a, b in mesh.interface_edges:
        lines.append(f"{a} {b}")
    return "\n".join(lines) + "\n"


def load_mesh(text):
    """Parse the plain-text mesh format and validate the result.

    Raises ParseError (with the 1-based line number) on malformed input
    and ValidationError on structurally invalid meshes.
    """
    rows = []  # (line_number, tokens)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            rows.append((lineno, body.split()))
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(rows):
            raise ParseError("unexpected end of input",
                             rows[-1][0] if rows else 1)
        row = rows[pos]
        pos += 1
        return row

    def section(keyword):
        lineno, tokens = take()
        if len(tokens) != 2 or tokens[0] != keyword:
            raise ParseError(f"expected '{keyword} <count>'", lineno)
        try:
            count = int(tokens[1])
        except ValueError:
            raise ParseError(f"bad count {tokens[1]!r}", lineno) from None
        if count < 0:
            raise ParseError("negative count", lineno)
        return count

    nv = section("vertices")
    vertices = np.empty((nv, 2))
    flags = np.empty(nv, dtype=np.int64)
    for i in range(nv):
        lineno, tokens = take()
        if len(tokens) != 3:
            raise ParseError("expected 'x y boundary_flag'", lineno)
        try:
            vertices[i] = (float(tokens[0]), float(tokens[1]))
            flags[i] = int(tokens[2])
        except ValueError:
            raise ParseError("bad vertex line", lineno) from None
        if flags[i] not in (0, 1):
            raise ParseError("boundary flag must be 0 or 1", lineno)

    nt = section("triangles")
    triangles = np.empty((nt, 3), dtype=np.int64)
    regions = np.empty(nt, dtype=np.int64)
    for i in range(nt):
        lineno, tokens = take()
        if len(tokens) != 4:
            raise ParseError("expected 'v0 v1 v2 region'", lineno)
        try:
            triangles[i] = [int(t) for t in tokens[:3]]
            regions[i] = int(tokens[3])
        except ValueError:
            raise ParseError("bad triangle line", lineno) from None
        if regions[i] not in (1, 2):
            raise ParseError("region must be 1 or 2", lineno)

    ne = section("interface_edges")
    edges = np.empty((ne, 2), dtype=np.int64)
    for i in range(ne):
        lineno, tokens = take()
        if len(tokens) != 2:
            raise ParseError("expected 'va vb'", lineno)
        try:
            edges[i] = [int(t) for t in tokens]
        except ValueError:
            raise ParseError("bad edge line", lineno) from None
    if pos != len(rows):
        raise ParseError("trailing content", rows[pos][0])

    # bounds must hold before any vertex-indexed computation (h)
    if nt and (triangles.min() < 0 or triangles.max() >= nv):
        raise ValidationError("triangle references a vertex index out of range")
    mesh = Mesh(
        vertices=vertices,
        triangles=triangles,
        regions=regions,
        boundary_vertices=np.nonzero(flags == 1)[0],
        interface_edges=edges,
        h=_max_diameter(vertices, triangles) if nt else 0.0,
    )
    return validate_mesh(mesh)
