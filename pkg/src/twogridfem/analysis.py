"""Norms, error measurement, barrier checks and convergence-rate extraction."""

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    DEFAULT_QUAD_DEGREE,
    FemFunction,
    _areas_and_gradients,
    _state_at_quad,
    assemble_stiffness,
    triangle_rule,
)
from .problems import ManufacturedSolution
from .twogrid import NotNested, prolongate

__all__ = [
    "ErrorRecord",
    "ConvergenceReport",
    "LinfReport",
    "AnalysisError",
    "ZeroError",
    "BoundaryNotZero",
    "DegenerateDenominator",
    "energy_norm",
    "grad_l2_norm",
    "lp_norm",
    "error_norms",
    "estimate_eoc",
    "convergence_report",
    "linf_check",
    "ladyzhenskaya_margin",
    "ladyzhenskaya_margin_formula",
    "twogrid_bound_ratio",
]

LINF_TOL = 1e-9
DEGENERATE_L4 = 1e-14


class AnalysisError(Exception):
    pass


class ZeroError(AnalysisError):
    """A zero error makes the convergence rate undefined."""


class BoundaryNotZero(AnalysisError):
    pass


class DegenerateDenominator(AnalysisError):
    pass


@dataclass
class ErrorRecord:
    h: float
    n_dof: int
    err_energy: float
    err_l2: float
    err_l4: float
    err_linf_nodal: float


@dataclass
class ConvergenceReport:
    records: list
    eoc_energy: list = field(default_factory=list)
    eoc_l2: list = field(default_factory=list)
    eoc_l4: list = field(default_factory=list)


@dataclass
class LinfReport:
    passes: bool
    lower: float
    upper: float
    min_value: float
    max_value: float
    violations: list
    tolerance: float


def energy_norm(mesh, diffusion, v):
    """|||v||| = sqrt(v^T A v) with the unconstrained stiffness matrix.

    Exact for P1 functions (piecewise-constant gradients).
    """
    a = assemble_stiffness(mesh, diffusion)
    return math.sqrt(max(float(v.values @ (a @ v.values)), 0.0))


def grad_l2_norm(mesh, v):
    """H1 seminorm ||grad v||_2 (unit diffusion energy norm)."""
    return energy_norm(mesh, {1: 1.0, 2: 1.0}, v)


def lp_norm(mesh, v, p, quad=None):
    """L^p norm of a FemFunction or coordinate callback, p in {2, 4}."""
    if p not in (2, 4):
        raise ValueError(f"p must be 2 or 4, got {p}")
    quad = quad or triangle_rule(max(DEFAULT_QUAD_DEGREE, p))
    areas, _ = _areas_and_gradients(mesh)
    if isinstance(v, FemFunction):
        _, vals = _state_at_quad(mesh, v.values, quad)
    else:
        coords, _ = _state_at_quad(mesh, None, quad)
        vals = np.asarray(v(coords), dtype=float)
    total = float(np.sum(
        areas[:, None] * quad.weights[None, :] * np.abs(vals) ** p))
    return total ** (1.0 / p)


def _manufactured_errors(mesh, diffusion, u_h, exact, quad):
    areas, grads = _areas_and_gradients(mesh)
    coords, uh_q = _state_at_quad(mesh, u_h.values, quad)
    uh_grad = np.einsum("mi,mid->md", u_h.values[mesh.triangles], grads)

    e2 = e4 = een = 0.0
    for region in np.unique(mesh.regions):
        m = mesh.regions == region
        d = diffusion[int(region)]
        diff = exact.exact(coords[m]) - uh_q[m]
        w = areas[m, None] * quad.weights[None, :]
        e2 += float(np.sum(w * diff ** 2))
        e4 += float(np.sum(w * diff ** 4))
        gdiff = exact.exact_grad(coords[m], int(region)) - uh_grad[m][:, None, :]
        een += d * float(np.sum(w * np.sum(gdiff ** 2, axis=-1)))
    linf = float(np.max(np.abs(exact.exact(mesh.vertices) - u_h.values)))
    return math.sqrt(een), math.sqrt(e2), e4 ** 0.25, linf


def error_norms(mesh, diffusion, u_h, exact, quad=None):
    """Errors of u_h against a manufactured solution or a finer reference.

    With a ManufacturedSolution the exact fields are integrated per element
    per region with the given quadrature (exact gradients are used
    directly, not interpolated).  With a reference FemFunction on a nested
    finer mesh, u_h is prolongated there and the norms are exact
    differences of two P1 functions.
    """
    quad = quad or triangle_rule(DEFAULT_QUAD_DEGREE)
    if isinstance(exact, ManufacturedSolution):
        een, e2, e4, linf = _manufactured_errors(
            mesh, diffusion, u_h, exact, quad)
    elif isinstance(exact, FemFunction):
        diff = prolongate(u_h, exact.mesh) - exact
        een = energy_norm(exact.mesh, diffusion, diff)
        e2 = lp_norm(exact.mesh, diff, 2, quad)
        e4 = lp_norm(exact.mesh, diff, 4, quad)
        linf = float(np.max(np.abs(diff.values)))
    else:
        raise TypeError(
            "exact must be a ManufacturedSolution or a reference FemFunction")
    return ErrorRecord(
        h=mesh.h,
        n_dof=len(mesh.interior_vertices),
        err_energy=een,
        err_l2=e2,
        err_l4=e4,
        err_linf_nodal=linf,
    )


def estimate_eoc(hs, errors):
    """Empirical orders log(e_i/e_{i+1}) / log(h_i/h_{i+1})."""
    hs = [float(x) for x in hs]
    errors = [float(e) for e in errors]
    if len(hs) != len(errors) or len(hs) < 2:
        raise ValueError("need at least two (h, error) pairs")
    if any(h2 >= h1 for h1, h2 in zip(hs, hs[1:])):
        raise ValueError("mesh sizes must be strictly decreasing")
    if any(e == 0.0 for e in errors):
        raise ZeroError("zero error: rate undefined")
    return [math.log(e1 / e2) / math.log(h1 / h2)
            for (h1, e1), (h2, e2) in zip(zip(hs, errors),
                                          zip(hs[1:], errors[1:]))]


def convergence_report(records):
    """Bundle records (ordered by decreasing h) with per-norm EOC lists."""
    report = ConvergenceReport(records=list(records))
    if len(records) >= 2:
        hs = [r.h for r in records]
        report.eoc_energy = estimate_eoc(hs, [r.err_energy for r in records])
        report.eoc_l2 = estimate_eoc(hs, [r.err_l2 for r in records])
        report.eoc_l4 = estimate_eoc(hs, [r.err_l4 for r in records])
    return report


def linf_check(u_h, barriers, tol=LINF_TOL):
    """Verify that all nodal values lie inside the barrier interval."""
    lower, upper = barriers
    values = u_h.values
    bad = np.nonzero((values < lower - tol) | (values > upper + tol))[0]
    return LinfReport(
        passes=bad.size == 0,
        lower=lower,
        upper=upper,
        min_value=float(values.min()),
        max_value=float(values.max()),
        violations=[int(i) for i in bad],
        tolerance=tol,
    )


def ladyzhenskaya_margin(mesh, v, d=2, quad=None):
    """Slack in ||v||_4 <= C ||v||_2^a ||grad v||_2^b for an H^1_0 function.

    In 2D (executed on the mesh) the constants are C = 2^(1/4),
    a = b = 1/2; the margin must be nonnegative up to roundoff.  The 3D
    inequality is available as a pure formula via
    ladyzhenskaya_margin_formula.
    """
    if d != 2:
        raise ValueError(
            "only d=2 executes on a mesh; use ladyzhenskaya_margin_formula "
            "for the 3D constants")
    if np.any(v.values[v.mesh.boundary_vertices] != 0.0):
        raise BoundaryNotZero("v must vanish on the boundary (H^1_0)")
    quad = quad or triangle_rule(DEFAULT_QUAD_DEGREE)
    l2 = lp_norm(mesh, v, 2, quad)
    l4 = lp_norm(mesh, v, 4, quad)
    grad = grad_l2_norm(mesh, v)
    return ladyzhenskaya_margin_formula(l2, grad, l4, d=2)


def ladyzhenskaya_margin_formula(norm_l2, norm_grad, norm_l4, d,
                                 constant="lemma"):
    """Pure-formula margin C * l2^a * grad^b - l4 for d = 2 or 3.

    ``constant="lemma"`` uses 2^(1/4) (2D) or sqrt(2) (3D);
    ``constant="appendix"`` uses the sharper 3D alternative (4/3)^(3/8).
    """
    if d == 2:
        if constant != "lemma":
            raise ValueError("only the lemma constant exists in 2D")
        c, a, b = 2.0 ** 0.25, 0.5, 0.5
    elif d == 3:
        if constant == "lemma":
            c = math.sqrt(2.0)
        elif constant == "appendix":
            c = (4.0 / 3.0) ** 0.375
        else:
            raise ValueError(f"unknown constant tag {constant!r}")
        a, b = 0.25, 0.75
    else:
        raise ValueError(f"dimension must be 2 or 3, got {d}")
    return c * norm_l2 ** a * norm_grad ** b - norm_l4


def twogrid_bound_ratio(u_h, u_coarse_prolonged, u_two_grid, mesh, diffusion,
                        quad=None):
    """Ratio |||u_h - u^h||| / ||u_h - u_H||_4^2 from the two-grid bound.

    A bounded ratio across level pairs is the empirical signature of the
    remainder estimate behind the algorithm.  Raises DegenerateDenominator
    when the coarse and fine solutions coincide to roundoff.
    """
    for fn in (u_h, u_coarse_prolonged, u_two_grid):
        if fn.mesh is not mesh:
            raise ValueError("all functions must live on the given fine mesh")
    denom = lp_norm(mesh, u_h - u_coarse_prolonged, 4, quad)
    if denom < DEGENERATE_L4:
        raise DegenerateDenominator(
            f"||u_h - u_H||_4 = {denom:.3e} is numerically zero")
    numer = energy_norm(mesh, diffusion, u_h - u_two_grid)
    return numer / denom ** 2
