"""P1 finite element operators on triangular meshes.

Global matrices are scipy CSR with sorted indices; stiffness and reaction
Jacobians are symmetric by construction.  Quadrature rules live on the
reference triangle in barycentric coordinates with weights summing to one,
so element integrals are ``area * sum(w_q * f(x_q))``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, _signed_areas

__all__ = [
    "QuadratureRule",
    "FemFunction",
    "AssemblyError",
    "DegenerateTriangle",
    "NotAVertex",
    "triangle_rule",
    "local_stiffness",
    "assemble_stiffness",
    "assemble_reaction_jacobian",
    "assemble_semilinear_residual",
    "assemble_load",
    "assemble_point_load",
    "assemble_interface_flux",
    "apply_dirichlet",
]

DEFAULT_QUAD_DEGREE = 5


class AssemblyError(Exception):
    pass


class DegenerateTriangle(AssemblyError):
    pass


class NotAVertex(AssemblyError):
    pass


@dataclass(eq=False)
class QuadratureRule:
    """Barycentric points and weights on the reference triangle.

    Weights sum to one (reference-area normalization); the rule integrates
    polynomials up to ``degree`` exactly.
    """

    points: np.ndarray   # (k, 3)
    weights: np.ndarray  # (k,)
    degree: int

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float)
        self.weights = np.ascontiguousarray(self.weights, dtype=float)


def _conical_product_rule(degree):
    """Duffy-transform tensor rule of the requested total degree.

    On the reference triangle with the substitution x = s, y = t*(1-s) the
    integrand of a degree-d polynomial has degree d+1 in s (the Jacobian
    contributes the extra power) and degree d in t, so Gauss-Legendre with
    ceil((d+2)/2) x ceil((d+1)/2) points is exact.  All weights positive.
    """
    ns = -(-(degree + 2) // 2)
    nt = -(-(degree + 1) // 2)
    gs, ws = np.polynomial.legendre.leggauss(ns)
    gt, wt = np.polynomial.legendre.leggauss(nt)
    s = 0.5 * (gs + 1.0)
    t = 0.5 * (gt + 1.0)
    ws = 0.5 * ws
    wt = 0.5 * wt
    pts = []
    wts = []
    for si, wsi in zip(s, ws):
        for ti, wti in zip(t, wt):
            x = si
            y = ti * (1.0 - si)
            pts.append((1.0 - x - y, x, y))
            wts.append(wsi * wti * (1.0 - si) * 2.0)  # /(ref area 1/2)
    return QuadratureRule(np.array(pts), np.array(wts), degree)


def triangle_rule(degree=DEFAULT_QUAD_DEGREE):
    """Return a rule exact for polynomials of the given total degree.

    Degrees 1, 2 and 5 use the classic centroid, edge-midpoint and 7-point
    rules; other degrees fall back to a positive-weight conical product.
    """
    if degree <= 1:
        return QuadratureRule(
            np.array([[1.0, 1.0, 1.0]]) / 3.0, np.array([1.0]), 1)
    if degree == 2:
        pts = np.array([
            [0.5, 0.5, 0.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
        ])
        return QuadratureRule(pts, np.full(3, 1.0 / 3.0), 2)
    if degree == 5:
        s15 = np.sqrt(15.0)
        a = (6.0 + s15) / 21.0
        b = (6.0 - s15) / 21.0
        wa = (155.0 + s15) / 1200.0
        wb = (155.0 - s15) / 1200.0
        pts = [[1.0 / 3.0] * 3]
        wts = [9.0 / 40.0]
        for lam, w in ((a, wa), (b, wb)):
            other = 1.0 - 2.0 * lam
            pts += [[other, lam, lam], [lam, other, lam], [lam, lam, other]]
            wts += [w, w, w]
        return QuadratureRule(np.array(pts), np.array(wts), 5)
    return _conical_product_rule(degree)


# 2-point Gauss on [0, 1], exact through cubics; used for edge integrals.
_EDGE_GAUSS_T = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_EDGE_GAUSS_W = np.array([0.5, 0.5])


@dataclass(eq=False)
class FemFunction:
    """Nodal coefficients of a P1 function bound to a mesh."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_vertices,):
            raise ValueError(
                f"expected {self.mesh.n_vertices} coefficients, "
                f"got shape {self.values.shape}")

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_vertices))

    @classmethod
    def interpolate(cls, mesh, fn):
        return cls(mesh, np.asarray(fn(mesh.vertices), dtype=float))

    def __sub__(self, other):
        if other.mesh is not self.mesh:
            raise ValueError("operands live on different meshes")
        return FemFunction(self.mesh, self.values - other.values)

    def __add__(self, other):
        if other.mesh is not self.mesh:
            raise ValueError("operands live on different meshes")
        return FemFunction(self.mesh, self.values + other.values)


def _diffusion_per_triangle(mesh, diffusion):
    d = np.empty(mesh.n_triangles)
    for tag in np.unique(mesh.regions):
        val = float(diffusion[int(tag)])
        if val <= 0:
            raise ValueError(f"diffusion in region {tag} must be positive")
        d[mesh.regions == tag] = val
    return d


def _areas_and_gradients(mesh):
    """Element areas and barycentric-basis gradients, shapes (M,), (M,3,2)."""
    p = mesh.triangle_coords()
    areas = _signed_areas(mesh.vertices, mesh.triangles)
    if np.any(areas <= 0):
        bad = int(np.argmax(areas <= 0))
        raise DegenerateTriangle(
            f"triangle {bad} has non-positive area {areas[bad]:g}")
    grads = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = p[:, j, 1] - p[:, k, 1]
        grads[:, i, 1] = p[:, k, 0] - p[:, j, 0]
    grads /= (2.0 * areas)[:, None, None]
    return areas, grads


def local_stiffness(coords, d):
    """Element stiffness D * area * grad(lam_i) . grad(lam_j), shape (3,3)."""
    p = np.asarray(coords, dtype=float)
    area = 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                  - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
    if area <= 0:
        raise DegenerateTriangle(f"non-positive area {area:g}")
    g = np.empty((3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[i] = (p[j, 1] - p[k, 1], p[k, 0] - p[j, 0])
    g /= 2.0 * area
    return d * area * (g @ g.T)


def _scatter(mesh, local):
    """Accumulate (M,3,3) element matrices into a global CSR matrix."""
    n = mesh.n_vertices
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    a = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    a.sort_indices()
    return a


def assemble_stiffness(mesh, diffusion):
    """Global stiffness for the bilinear form int D grad(u).grad(v).

    ``diffusion`` maps region tags to positive scalars, e.g. {1: 1000, 2: 1}.
    Before boundary conditions every row sums to zero.
    """
    d = _diffusion_per_triangle(mesh, diffusion)
    areas, grads = _areas_and_gradients(mesh)
    local = np.einsum("mid,mjd->mij", grads, grads)
    local *= (d * areas)[:, None, None]
    return _scatter(mesh, local)


def _state_at_quad(mesh, values, quad):
    """Physical coordinates and P1 values at all quadrature points.

    Returns (coords, vals) with shapes (M, k, 2) and (M, k).
    """
    p = mesh.triangle_coords()
    lam = quad.points  # (k, 3)
    coords = np.einsum("qi,mid->mqd", lam, p)
    vals = values[mesh.triangles] @ lam.T if values is not None else None
    return coords, vals


def assemble_reaction_jacobian(mesh, state, d1, quad):
    """Weighted mass matrix M_ij = int d1(x, u) phi_j phi_i by quadrature."""
    areas, _ = _areas_and_gradients(mesh)
    coords, uq = _state_at_quad(mesh, state.values, quad)
    w = d1(coords, uq) * quad.weights[None, :] * areas[:, None]  # (M, k)
    lam = quad.points
    local = np.einsum("mq,qi,qj->mij", w, lam, lam)
    return _scatter(mesh, local)


def _moment_vector(mesh, values_at_quad, quad, areas=None):
    """Vector v_i = sum_T area_T sum_q w_q f(x_q) phi_i(x_q)."""
    if areas is None:
        areas, _ = _areas_and_gradients(mesh)
    w = values_at_quad * quad.weights[None, :] * areas[:, None]  # (M, k)
    contrib = w @ quad.points  # (M, 3)
    return np.bincount(
        mesh.triangles.ravel(), weights=contrib.ravel(),
        minlength=mesh.n_vertices)


def assemble_point_load(mesh, location, magnitude):
    """Nodal delta load: the magnitude lands on the vertex at ``location``."""
    loc = np.asarray(location, dtype=float)
    dist = np.abs(mesh.vertices - loc[None, :]).max(axis=1)
    hits = np.nonzero(dist <= 1e-12)[0]
    if hits.size != 1:
        raise NotAVertex(f"no mesh vertex at {tuple(loc)}")
    load = np.zeros(mesh.n_vertices)
    load[hits[0]] = magnitude
    return load


def assemble_interface_flux(mesh, g_flux):
    """Load v_i = sum over interface edges of int g phi_i ds (2-pt Gauss)."""
    load = np.zeros(mesh.n_vertices)
    if len(mesh.interface_edges) == 0:
        return load
    pa = mesh.vertices[mesh.interface_edges[:, 0]]
    pb = mesh.vertices[mesh.interface_edges[:, 1]]
    lengths = np.hypot(*(pb - pa).T)
    for t, w in zip(_EDGE_GAUSS_T, _EDGE_GAUSS_W):
        x = (1.0 - t) * pa + t * pb
        g = g_flux(x)
        np.add.at(load, mesh.interface_edges[:, 0],
                  w * lengths * g * (1.0 - t))
        np.add.at(load, mesh.interface_edges[:, 1], w * lengths * g * t)
    return load


def assemble_load(mesh, problem, quad):
    """Total load vector: volume source, point source and interface flux."""
    load = np.zeros(mesh.n_vertices)
    if problem.source is not None:
        areas, _ = _areas_and_gradients(mesh)
        coords, _ = _state_at_quad(mesh, None, quad)
        load += _moment_vector(mesh, problem.source(coords), quad, areas)
    if problem.point_source is not None:
        load += assemble_point_load(mesh, problem.point_source.location,
                                    problem.point_source.magnitude)
    if problem.interface_flux is not None:
        load += assemble_interface_flux(mesh, problem.interface_flux)
    return load


def assemble_semilinear_residual(mesh, state, problem, quad,
                                 stiffness=None, load=None):
    """Discrete residual r_i = a(u,phi_i) + (b(u),phi_i) - <loads,phi_i>.

    Dirichlet rows are zeroed, so the residual vanishes exactly at a
    discrete solution whose boundary values match the Dirichlet data.
    The optional ``stiffness``/``load`` arguments reuse state-independent
    pieces across Newton iterations.
    """
    if stiffness is None:
        stiffness = assemble_stiffness(mesh, problem.diffusion)
    if load is None:
        load = assemble_load(mesh, problem, quad)
    areas, _ = _areas_and_gradients(mesh)
    coords, uq = _state_at_quad(mesh, state.values, quad)
    bvals = problem.nonlinearity.eval(coords, uq)
    r = stiffness @ state.values + _moment_vector(mesh, bvals, quad, areas)
    r -= load
    r[mesh.boundary_vertices] = 0.0
    return r


def apply_dirichlet(matrix, rhs, boundary, g=None, mesh=None):
    """Symmetric elimination of Dirichlet rows and columns.

    Boundary rows/columns collapse to the identity, the right-hand side
    absorbs the moved columns, and the constrained system stays symmetric
    positive definite.  Solutions of the constrained system take the value
    of ``g`` at boundary vertices exactly.

    ``g`` may be None (homogeneous), a scalar, an array of one value per
    boundary vertex, or a callback on coordinates (then ``mesh`` is
    required to locate the boundary vertices).
    """
    n = matrix.shape[0]
    boundary = np.asarray(boundary, dtype=np.int64)
    if g is None:
        gb = np.zeros(len(boundary))
    elif callable(g):
        if mesh is None:
            raise TypeError("a Dirichlet callback needs the mesh")
        gb = np.broadcast_to(
            np.asarray(g(mesh.vertices[boundary]), dtype=float),
            (len(boundary),)).copy()
    else:
        gb = np.broadcast_to(
            np.asarray(g, dtype=float), (len(boundary),)).copy()
    x_bc = np.zeros(n)
    x_bc[boundary] = gb
    keep = np.ones(n)
    keep[boundary] = 0.0
    new_rhs = rhs - matrix @ x_bc
    new_rhs[boundary] = gb
    mask = sp.diags(keep, format="csr")
    pin = sp.diags(1.0 - keep, format="csr")
    constrained = (mask @ matrix @ mask + pin).tocsr()
    constrained.sum_duplicates()
    constrained.sort_indices()
    return constrained, new_rhs
