"""Two-grid algorithm: exact coarse nonlinear solve, one fine Newton update.

The coarse problem is solved with damped Newton to tight tolerance, the
solution is prolongated to the fine mesh (exact P1 nodal interpolation on
nested meshes), and a single linearized solve on the fine mesh produces
the two-grid approximation.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .assembly import (
    DEFAULT_QUAD_DEGREE,
    FemFunction,
    _areas_and_gradients,
    _moment_vector,
    _state_at_quad,
    apply_dirichlet,
    assemble_load,
    assemble_reaction_jacobian,
    assemble_stiffness,
    triangle_rule,
)
from .solvers import NewtonOptions, SolveReport, make_initial_guess, \
    newton_solve, pcg_solve

__all__ = [
    "TwoGridResult",
    "TwoGridError",
    "NotNested",
    "InvalidRegularity",
    "prolongate",
    "linearized_solve",
    "two_grid_solve",
    "nested_newton_solve",
    "select_coarse_size",
]

# "Exact" coarse solve tolerance: the algorithm assumes the coarse
# nonlinear problem is solved exactly; this pins down what that means.
COARSE_NEWTON_OPTS = NewtonOptions(abs_tol=1e-12, rel_tol=1e-12,
                                   max_iters=80)
FINE_PCG_TOL = 1e-12


class TwoGridError(Exception):
    pass


class NotNested(TwoGridError):
    pass


class InvalidRegularity(TwoGridError):
    pass


@dataclass(eq=False)
class TwoGridResult:
    coarse_solution: FemFunction
    fine_solution: FemFunction
    coarse_report: SolveReport
    fine_report: SolveReport
    coarse_h: float
    fine_h: float


def refinement_chain(fine_mesh, coarse_mesh):
    """Meshes from coarse to fine along parent links; NotNested otherwise."""
    chain = [fine_mesh]
    node = fine_mesh
    while node is not coarse_mesh:
        node = node.parent
        if node is None:
            raise NotNested(
                "fine mesh is not a refinement descendant of the coarse mesh")
        chain.append(node)
    return list(reversed(chain))


def prolongate(u_coarse, t_h):
    """Embed a coarse P1 function into the fine space on a nested mesh.

    Coarse vertices copy their values and each edge-midpoint vertex
    averages its edge endpoints, level by level, so the prolonged function
    equals the coarse one pointwise everywhere.
    """
    chain = refinement_chain(t_h, u_coarse.mesh)
    values = u_coarse.values
    for mesh in chain[1:]:
        edges = mesh.midpoint_edges
        mids = 0.5 * (values[edges[:, 0]] + values[edges[:, 1]])
        values = np.concatenate([values, mids])
    return FemFunction(t_h, values)


def linearized_solve(t_h, problem, u_base, quad=None, pcg_tol=FINE_PCG_TOL,
                     max_iters=None):
    """One Newton-linearized solve on the fine mesh about ``u_base``.

    Solves a(u, v) + (b'(u_base) u, v) =
    <loads, v> + (b'(u_base) u_base - b(u_base), v) for u in the fine
    space, with Dirichlet data imposed.  This is exactly one fine-grid
    Newton step from the prolonged coarse solution.

    Returns (solution, SolveReport of the linear solve).
    """
    quad = quad or triangle_rule(DEFAULT_QUAD_DEGREE)
    if u_base.mesh is not t_h:
        raise NotNested("u_base must live on the fine mesh; prolongate first")

    nl = problem.nonlinearity
    d1_nodal = np.asarray(nl.d1(t_h.vertices, u_base.values), dtype=float)
    if np.any(d1_nodal < 0):
        warnings.warn(
            "b'(u_base) is negative at some vertices; the linearized system "
            "may be indefinite (local monotonicity violated)",
            stacklevel=2)

    stiffness = assemble_stiffness(t_h, problem.diffusion)
    reaction = assemble_reaction_jacobian(t_h, u_base, nl.d1, quad)
    load = assemble_load(t_h, problem, quad)

    areas, _ = _areas_and_gradients(t_h)
    coords, uq = _state_at_quad(t_h, u_base.values, quad)
    b_moment = _moment_vector(t_h, nl.eval(coords, uq), quad, areas)
    rhs = load + reaction @ u_base.values - b_moment

    g_values = u_base.values[t_h.boundary_vertices]
    system, rhs_c = apply_dirichlet(stiffness + reaction, rhs,
                                    t_h.boundary_vertices, g_values)
    x, report = pcg_solve(system, rhs_c, tol=pcg_tol, max_iters=max_iters,
                          x0=u_base.values)
    return FemFunction(t_h, x), report


def two_grid_solve(t_coarse, t_fine, problem, coarse_opts=None, quad=None,
                   pcg_tol=FINE_PCG_TOL):
    """Run the two-grid algorithm on a nested mesh pair.

    Step 1 solves the nonlinear problem on the coarse mesh (Newton to the
    documented "exact" tolerance); step 2 prolongates and performs one
    linearized solve on the fine mesh.  Total fine-grid work is a single
    linear solve.
    """
    coarse_opts = coarse_opts or COARSE_NEWTON_OPTS
    u_coarse, coarse_report = newton_solve(
        t_coarse, problem, None, coarse_opts, quad)
    u_base = prolongate(u_coarse, t_fine)
    u_fine, fine_report = linearized_solve(
        t_fine, problem, u_base, quad, pcg_tol)
    return TwoGridResult(
        coarse_solution=u_coarse,
        fine_solution=u_fine,
        coarse_report=coarse_report,
        fine_report=fine_report,
        coarse_h=t_coarse.h,
        fine_h=t_fine.h,
    )


def nested_newton_solve(meshes, problem, opts=None, quad=None):
    """Full nonlinear solve on the finest mesh, warm-started level by level.

    ``meshes`` is a coarse-to-fine refinement chain.  Each level's Newton
    solve starts from the prolongated solution of the previous level,
    which keeps iteration counts flat across levels.  Returns the finest
    solution and the per-level reports.
    """
    solution = None
    reports = []
    for mesh in meshes:
        initial = (prolongate(solution, mesh) if solution is not None
                   else make_initial_guess(mesh, problem))
        solution, report = newton_solve(mesh, problem, initial, opts, quad)
        reports.append(report)
    return solution, reports


def select_coarse_size(h, s, tau, d=2, snap="up", levels=None):
    """Coarse mesh size matching the two-grid accuracy balance.

    With solution regularity s and dual regularity tau (t = min(s, tau) - 1),
    the fine-grid error h^(s-1) is preserved when
    H = h^((s-1)/(t + 2(s-1))) in 2D or H = h^((s-1)/(t/2 + 2(s-1))) in 3D.
    The formula value is snapped to a level of the dyadic hierarchy
    {h * 2^k}: ``snap="up"`` picks the finest-or-equal level not exceeding
    the formula value (preserving H <= h^exponent), ``snap="nearest"`` the
    geometrically closest one.  Passing ``levels`` restricts candidates to
    an explicit list of available coarse sizes.
    """
    if s <= 1 or tau <= 1:
        raise InvalidRegularity("regularity exponents must exceed 1")
    if d not in (2, 3):
        raise InvalidRegularity(f"dimension must be 2 or 3, got {d}")
    if snap not in ("up", "nearest"):
        raise ValueError(f"snap must be 'up' or 'nearest', got {snap!r}")
    t = min(s, tau) - 1.0
    denom = t + 2.0 * (s - 1.0) if d == 2 else t / 2.0 + 2.0 * (s - 1.0)
    target = h ** ((s - 1.0) / denom)

    if levels is None:
        k = math.log2(target / h)
        k = math.floor(k + 1e-9) if snap == "up" else round(k)
        return h * 2.0 ** max(k, 0)

    below = [lv for lv in levels if lv <= target * (1.0 + 1e-9)]
    if snap == "up" and below:
        return max(below)
    return min(levels, key=lambda lv: abs(math.log(lv) - math.log(target)))
