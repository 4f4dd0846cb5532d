"""Numerical checks: the positivity weight of the stability condition and
self-convergence studies for the forward solver."""

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .cq import CQScheme, discrete_caputo, make_scheme
from .forward import Trajectory, coefficient_levels, solve_forward
from .mesh import Mesh, build_interval_mesh, build_square_mesh, evaluate_p1


@dataclass
class PositivityReport:
    """Evaluation of ``W = q |grad u|^2 + (f - d_t^alpha u) u`` on the grid.

    ``min_ratio[beta]`` is the smallest ``W / dist(x, boundary)**beta``
    over interior nodes and the retained time levels; the condition holds
    empirically when it is strictly positive.  No pass/fail threshold is
    applied because the constant in the condition is not quantified.
    """

    weight_field: np.ndarray = field(repr=False)
    min_ratio: dict = field(default_factory=dict)
    sign_u_nonnegative: bool = False
    sign_caputo_nonpositive: bool = False
    min_u: float = 0.0
    max_caputo: float = 0.0
    fitted_beta: float = float("nan")
    fitted_beta_residual: float = float("nan")
    skip_initial_levels: int = 1


def positivity_report(
    mesh: Mesh,
    scheme: CQScheme,
    q,
    trajectory,
    f=None,
    beta_candidates=(0.0, 1.0, 2.0),
    skip_initial_levels: int = 1,
    sign_tol: float = 1e-8,
    boundary_band: float = 0.25,
) -> PositivityReport:
    """Evaluate the positivity weight on a computed trajectory.

    ``skip_initial_levels`` drops that many leading time levels from the
    minimum-ratio and sign scans (the discrete fractional derivative of
    the state blows up like ``t**(alpha-1)`` for incompatible data).
    The sign check on the state itself always covers every level.
    """
    q_levels = coefficient_levels(mesh, scheme, q)
    U = trajectory.levels if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    N = scheme.N
    if U.shape != (N + 1, mesh.n_interior):
        raise ValueError(f"trajectory must have shape {(N + 1, mesh.n_interior)}")
    dmap = fem.dof_map(mesh)
    U_full = dmap.extend(U)

    caputo = np.empty((N, mesh.n_interior))
    for n in range(1, N + 1):
        caputo[n - 1] = discrete_caputo(scheme, U, n)
    caputo_full = dmap.extend(caputo)

    W = np.empty((N, mesh.n_nodes))
    for n in range(1, N + 1):
        g2 = fem.nodal_gradient_square(mesh, U_full[n])
        f_nodal = np.asarray(f(mesh.nodes, n * scheme.tau), dtype=float) if f is not None else 0.0
        W[n - 1] = q_levels[n - 1] * g2 + (f_nodal - caputo_full[n - 1]) * U_full[n]
    if not np.all(np.isfinite(W)):
        raise ValueError("positivity weight evaluation produced non-finite values")

    dist = mesh.boundary_distance()
    interior = mesh.interior
    keep = slice(skip_initial_levels, None)
    W_kept = W[keep][:, interior]
    min_ratio = {
        float(beta): float(np.min(W_kept / dist[interior] ** beta))
        for beta in beta_candidates
    }

    min_u = float(np.min(U))
    max_caputo = float(np.max(caputo[keep])) if N > skip_initial_levels else float("-inf")

    band = interior[dist[interior] <= boundary_band]
    w_node = np.min(W[keep][:, band], axis=0)
    ok = w_node > 0.0
    if np.count_nonzero(ok) >= 3:
        slope, icpt = np.polyfit(np.log(dist[band][ok]), np.log(w_node[ok]), 1)
        resid = float(
            np.sqrt(
                np.mean(
                    (np.log(w_node[ok]) - (slope * np.log(dist[band][ok]) + icpt)) ** 2
                )
            )
        )
        fitted_beta, fitted_resid = float(slope), resid
    else:
        fitted_beta, fitted_resid = float("nan"), float("nan")

    return PositivityReport(
        weight_field=W,
        min_ratio=min_ratio,
        sign_u_nonnegative=bool(min_u >= -sign_tol),
        sign_caputo_nonpositive=bool(max_caputo <= sign_tol),
        min_u=min_u,
        max_caputo=max_caputo,
        fitted_beta=fitted_beta,
        fitted_beta_residual=fitted_resid,
        skip_initial_levels=skip_initial_levels,
    )


def _build_mesh(dim: int, M: int) -> Mesh:
    return build_interval_mesh(M) if dim == 1 else build_square_mesh(M)


def _constant_coefficient(mesh, scheme, q_fn) -> np.ndarray:
    q_nodal = np.asarray(q_fn(mesh.nodes), dtype=float)
    return np.tile(q_nodal, (scheme.N, 1))


def temporal_convergence(
    dim: int,
    M: int,
    alpha: float,
    T: float,
    u0,
    f,
    q_fn,
    N_ladder,
    refine: int = 4,
):
    """Self-convergence in the time step at fixed final time.

    Solves on a fixed mesh for every N in the ladder and compares the
    final-time level against a reference computed with ``refine`` times
    more steps than the finest ladder entry.
    """
    N_ladder = sorted(int(n) for n in N_ladder)
    if len(N_ladder) < 3:
        raise ValueError("ladder needs at least 3 resolutions")
    mesh = _build_mesh(dim, M)
    ref_scheme = make_scheme(alpha, T, refine * N_ladder[-1])
    ref = solve_forward(mesh, ref_scheme, _constant_coefficient(mesh, ref_scheme, q_fn), u0, f)
    rows = []
    for N in N_ladder:
        scheme = make_scheme(alpha, T, N)
        traj = solve_forward(mesh, scheme, _constant_coefficient(mesh, scheme, q_fn), u0, f)
        err = fem.l2_norm(mesh, traj.levels[-1] - ref.levels[-1])
        rows.append((mesh.h, scheme.tau, err))
    order = -float(np.polyfit(np.log([n for n in N_ladder]), np.log([r[2] for r in rows]), 1)[0])
    return rows, order


def spatial_convergence(
    dim: int,
    N: int,
    alpha: float,
    T: float,
    u0,
    f,
    q_fn,
    M_ladder,
    refine: int = 4,
):
    """Self-convergence in the mesh size with the time step held fixed.

    Each ladder solution is prolonged (exactly, by P1 evaluation on the
    nested finer lattice) to the reference mesh, where the L2 difference
    is measured.
    """
    M_ladder = sorted(int(m) for m in M_ladder)
    if len(M_ladder) < 3:
        raise ValueError("ladder needs at least 3 resolutions")
    M_ref = refine * M_ladder[-1]
    ref_mesh = _build_mesh(dim, M_ref)
    scheme = make_scheme(alpha, T, N)
    ref = solve_forward(ref_mesh, scheme, _constant_coefficient(ref_mesh, scheme, q_fn), u0, f)
    ref_full = fem.dof_map(ref_mesh).extend(ref.levels[-1])
    rows = []
    for M in M_ladder:
        if M_ref % M != 0:
            raise ValueError(f"ladder mesh M={M} does not nest in the reference M={M_ref}")
        mesh = _build_mesh(dim, M)
        traj = solve_forward(mesh, scheme, _constant_coefficient(mesh, scheme, q_fn), u0, f)
        coarse_full = fem.dof_map(mesh).extend(traj.levels[-1])
        prolonged = evaluate_p1(mesh, coarse_full, ref_mesh.nodes)
        err = fem.l2_norm(ref_mesh, prolonged - ref_full)
        rows.append((mesh.h, scheme.tau, err))
    order = float(np.polyfit(np.log([r[0] for r in rows]), np.log([r[2] for r in rows]), 1)[0])
    return rows, order
