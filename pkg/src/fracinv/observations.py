"""Noisy observation synthesis, data transfer, and error metrics.

Noise is pointwise Gaussian on the fine grid, scaled by the sup norm of
the reference state.  The noisy field is transferred to the inversion
grid by nodal restriction in space (P1 point evaluation when the meshes
do not nest) and by trapezoidal averaging over each coarse time step.
The randomness comes from a counter-based Philox generator so every
realization is replayable from its seed.
"""

from dataclasses import dataclass, field

import numpy as np

import scipy.sparse.linalg as spla

from . import fem
from .cq import CQScheme
from .forward import Trajectory
from .mesh import Mesh, _nested_index_map, evaluate_p1, prolongation_matrix

GENERATOR_NAME = "numpy.random.Philox(SeedSequence(seed))"


@dataclass
class ObservationSet:
    """Observations on the inversion grid plus the exact reference there."""

    z_levels: np.ndarray = field(repr=False)
    exact_on_coarse: np.ndarray = field(repr=False)
    epsilon: float = 0.0
    delta_estimate: float = 0.0
    seed: object = None
    generator: str = GENERATOR_NAME


def _interior_restriction_indices(fine: Mesh, coarse: Mesh) -> np.ndarray:
    """Fine interior index of every coarse interior node (nested meshes)."""
    full_map = _nested_index_map(fine, coarse)
    fine_int_of_full = -np.ones(fine.n_nodes, dtype=int)
    fine_int_of_full[fine.interior] = np.arange(fine.n_interior)
    sel = fine_int_of_full[full_map[coarse.interior]]
    assert np.all(sel >= 0), "coarse interior node fell on the fine boundary"
    return sel


def synthesize_observations(
    fine_mesh: Mesh,
    fine_scheme: CQScheme,
    fine_trajectory,
    coarse_mesh: Mesh,
    coarse_scheme: CQScheme,
    epsilon: float,
    seed,
    transfer: str = "project",
    time_transfer: str = "centered",
) -> ObservationSet:
    """Generate noisy data on the fine grid and move it to the inversion grid.

    Parameters
    ----------
    fine_trajectory : Trajectory or ndarray (N_fine+1, n_int_fine)
        Reference state computed on the fine grid.
    epsilon : float
        Relative pointwise noise amplitude (0 disables the noise).
    seed : int or numpy.random.SeedSequence
        Reproducibility handle for the Philox stream.
    transfer : str
        ``'project'`` (default) is the L2 projection of the fine field
        onto the coarse space, which averages the pointwise noise over
        neighboring fine nodes;  ``'restrict'`` samples at the coincident
        nodes of nested meshes;  ``'interpolate'`` evaluates the fine P1
        field at coarse nodes and also covers non-nested pairs.
    time_transfer : str
        ``'centered'`` (default) forms the trapezoidal mean over a window
        centered at each coarse level, which suppresses the pointwise
        noise without biasing the level values;  ``'sample'`` takes the
        noisy field at the coarse levels;  ``'average'`` is the
        trapezoidal mean over the preceding coarse step, whose systematic
        half-step offset floors the recovery error once the noise drops
        below it.
    """
    if epsilon < 0.0:
        raise ValueError("noise level must be nonnegative")
    U = fine_trajectory.levels if isinstance(fine_trajectory, Trajectory) else np.asarray(fine_trajectory)
    if U.shape != (fine_scheme.N + 1, fine_mesh.n_interior):
        raise ValueError("fine trajectory does not match the fine grid")
    if not np.all(np.isfinite(U)):
        raise ValueError("fine trajectory contains non-finite values")
    if fine_scheme.N % coarse_scheme.N != 0:
        raise ValueError(
            f"time grids are not nested: {fine_scheme.N} fine steps over {coarse_scheme.N} coarse"
        )
    if abs(fine_scheme.T - coarse_scheme.T) > 1e-12 * max(fine_scheme.T, 1.0):
        raise ValueError("fine and coarse schemes cover different time horizons")

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    umax = float(np.max(np.abs(U)))
    noise = epsilon * umax * rng.standard_normal(U.shape) if epsilon > 0.0 else 0.0
    z_fine = U + noise

    if transfer == "project":
        P = prolongation_matrix(coarse_mesh, fine_mesh)
        P_int = P[np.ix_(fine_mesh.interior, coarse_mesh.interior)].tocsr()
        Mf_int = fem.interior_mass(fine_mesh)
        Mc_int = spla.splu(fem.interior_mass(coarse_mesh).tocsc())
        z_nodes = Mc_int.solve((P_int.T @ (Mf_int @ z_fine.T))).T
        exact_nodes = Mc_int.solve((P_int.T @ (Mf_int @ U.T))).T
    elif transfer == "restrict":
        sel = _interior_restriction_indices(fine_mesh, coarse_mesh)
        z_nodes = z_fine[:, sel]
        exact_nodes = U[:, sel]
    elif transfer == "interpolate":
        dmap = fem.dof_map(fine_mesh)
        pts = coarse_mesh.nodes[coarse_mesh.interior]
        z_nodes = evaluate_p1(fine_mesh, dmap.extend(z_fine), pts)
        exact_nodes = evaluate_p1(fine_mesh, dmap.extend(U), pts)
    else:
        raise ValueError(f"unknown transfer mode {transfer!r}")

    r = fine_scheme.N // coarse_scheme.N
    Nc = coarse_scheme.N
    if time_transfer == "sample":
        z = z_nodes[r * np.arange(1, Nc + 1)]
    elif time_transfer in ("centered", "average"):
        z = np.empty((Nc, coarse_mesh.n_interior))
        for n in range(1, Nc + 1):
            if time_transfer == "centered":
                lo = max(r * n - r // 2, 0)
                hi = min(r * n + r // 2, fine_scheme.N)
            else:
                lo, hi = r * (n - 1), r * n
            if hi == lo:
                z[n - 1] = z_nodes[lo]
                continue
            z[n - 1] = (
                0.5 * z_nodes[lo] + z_nodes[lo + 1 : hi].sum(axis=0) + 0.5 * z_nodes[hi]
            ) / (hi - lo)
    else:
        raise ValueError(f"unknown time transfer mode {time_transfer!r}")
    exact = exact_nodes[r * np.arange(1, Nc + 1)]

    M_int = fem.interior_matrix(coarse_mesh, fem.mass_matrix(coarse_mesh))
    R = z - exact
    delta = float(np.sqrt(max(coarse_scheme.tau * np.sum((M_int @ R.T).T * R), 0.0)))
    return ObservationSet(
        z_levels=z,
        exact_on_coarse=exact,
        epsilon=epsilon,
        delta_estimate=delta,
        seed=seed,
    )


def error_eq(q_star, q_truth, mesh: Mesh, scheme: CQScheme) -> float:
    """l2(L2) error of the recovered coefficient against the interpolated truth."""
    levels = q_star.levels if hasattr(q_star, "levels") else np.asarray(q_star, dtype=float)
    if levels.shape != (scheme.N, mesh.n_nodes):
        raise ValueError(
            f"coefficient must have shape {(scheme.N, mesh.n_nodes)}, got {levels.shape}"
        )
    Mf = fem.mass_matrix(mesh)
    total = 0.0
    for n in range(1, scheme.N + 1):
        diff = levels[n - 1] - np.asarray(q_truth(mesh.nodes, n * scheme.tau), dtype=float)
        total += float(diff @ (Mf @ diff))
    return float(np.sqrt(max(scheme.tau * total, 0.0)))


def error_eu(trajectory, reference_on_coarse: np.ndarray, mesh: Mesh, scheme: CQScheme) -> float:
    """l2(L2) error of the state against the restricted fine reference."""
    U = trajectory.levels if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    if U.shape[0] == scheme.N + 1:
        U = U[1:]
    ref = np.asarray(reference_on_coarse, dtype=float)
    if U.shape != (scheme.N, mesh.n_interior) or ref.shape != U.shape:
        raise ValueError("state levels and reference must both be (N, n_interior)")
    M_int = fem.interior_matrix(mesh, fem.mass_matrix(mesh))
    R = U - ref
    return float(np.sqrt(max(scheme.tau * np.sum((M_int @ R.T).T * R), 0.0)))


@dataclass
class RateFit:
    """Least-squares slope of log(error) against log(noise)."""

    points: tuple
    rate: float
    intercept: float


def fit_rate(points) -> RateFit:
    """Fit ``error ~ C * delta**rate`` through at least three positive points."""
    pts = [(float(d), float(e)) for d, e in points]
    if len(pts) < 3:
        raise ValueError(f"rate fit needs at least 3 points, got {len(pts)}")
    if any(d <= 0.0 or e <= 0.0 for d, e in pts):
        raise ValueError("rate fit needs strictly positive noise levels and errors")
    logd = np.log([d for d, _ in pts])
    loge = np.log([e for _, e in pts])
    rate, intercept = np.polyfit(logd, loge, 1)
    return RateFit(points=tuple(pts), rate=float(rate), intercept=float(intercept))
