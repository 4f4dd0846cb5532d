"""Exact gradient of the discrete objective via the discrete adjoint.

The adjoint recursion is the transpose of the block lower-triangular
forward system (discretize-then-optimize), so the assembled gradient
matches finite differences of the objective to truncation error.  The
per-level matrices coincide with the forward ones by symmetry.
"""

import numpy as np

from . import fem
from .cq import CQScheme
from .forward import LevelSystems, Trajectory, coefficient_levels


def solve_adjoint(mesh, scheme: CQScheme, q, trajectory, observations, method: str = "direct") -> np.ndarray:
    """Backward recursion for the adjoint levels ``P^1 .. P^N``.

    Solves, for m = N down to 1,

        (tau^-alpha * M + A(q^m)) P^m
            = -tau * M (U^m - z_m) - tau^-alpha * M * sum_{n>m} b_{n-m} P^n,

    the exact transpose of the forward block system.  Returns an
    (N, n_interior) array.
    """
    q_levels = coefficient_levels(mesh, scheme, q)
    U = trajectory.levels if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    Z = np.asarray(observations, dtype=float)
    N = scheme.N
    n_int = mesh.n_interior
    if U.shape != (N + 1, n_int):
        raise ValueError(f"trajectory must have shape {(N + 1, n_int)}, got {U.shape}")
    if Z.shape != (N, n_int):
        raise ValueError(f"observations must have shape {(N, n_int)}, got {Z.shape}")
    systems = LevelSystems(mesh, scheme, q_levels, method=method)
    return systems.adjoint(U, Z)


def _misfit_gradient(mesh, U_full: np.ndarray, P_full: np.ndarray) -> np.ndarray:
    """Per-level nodal gradient of the misfit: ``g^n_k = int psi_k grad U^n . grad P^n``.

    The element gradients are constant, so the integral over an element
    is its measure times the gradient product divided by the number of
    vertices (``int_e psi_k = |e| / (dim + 1)``).
    """
    data = fem._assembly_data(mesh)
    grads, measures = data[4], data[5]
    elems = mesh.elements
    gU = np.einsum("eid,nei->ned", grads, U_full[:, elems])
    gP = np.einsum("eid,nei->ned", grads, P_full[:, elems])
    contrib = np.sum(gU * gP, axis=2) * (measures / (mesh.dim + 1))
    out = np.zeros((mesh.n_nodes, U_full.shape[0]))
    for v in range(mesh.dim + 1):
        np.add.at(out, elems[:, v], contrib.T)
    return out.T


def regularization_value(mesh, scheme: CQScheme, q_levels: np.ndarray, gamma: float) -> float:
    """Penalty ``gamma/2 * (||grad q||^2 + ||d_tau q||^2)`` in the l2(L2) norms.

    The time difference is summed over n = 2..N only (no level exists
    before the first one).
    """
    if gamma == 0.0:
        return 0.0
    A1 = fem.unit_stiffness(mesh)
    Mf = fem.mass_matrix(mesh)
    space = scheme.tau * float(np.sum((A1 @ q_levels.T).T * q_levels))
    D = np.diff(q_levels, axis=0)
    time = float(np.sum((Mf @ D.T).T * D)) / scheme.tau
    return 0.5 * gamma * (space + time)


def regularization_gradient(mesh, scheme: CQScheme, q_levels: np.ndarray, gamma: float) -> np.ndarray:
    if gamma == 0.0:
        return np.zeros_like(q_levels)
    A1 = fem.unit_stiffness(mesh)
    Mf = fem.mass_matrix(mesh)
    space = scheme.tau * (A1 @ q_levels.T).T
    D = np.diff(q_levels, axis=0)
    sd = np.zeros_like(q_levels)
    sd[1:] += D
    sd[:-1] -= D
    time = (Mf @ sd.T).T / scheme.tau
    return gamma * (space + time)


def assemble_gradient(mesh, scheme: CQScheme, q, trajectory, adjoint: np.ndarray, gamma: float) -> np.ndarray:
    """Full-node gradient of the discrete objective per time level, (N, n_nodes)."""
    q_levels = coefficient_levels(mesh, scheme, q)
    U = trajectory.levels if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    P = np.asarray(adjoint, dtype=float)
    N = scheme.N
    if U.shape != (N + 1, mesh.n_interior) or P.shape != (N, mesh.n_interior):
        raise ValueError("trajectory/adjoint shapes do not match the scheme")
    dmap = fem.dof_map(mesh)
    g = _misfit_gradient(mesh, dmap.extend(U[1:]), dmap.extend(P))
    return g + regularization_gradient(mesh, scheme, q_levels, gamma)
