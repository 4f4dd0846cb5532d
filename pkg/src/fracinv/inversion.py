"""Minimization of the discrete objective over the box-constrained set.

The default algorithm is a projected Gauss-Newton iteration: each outer
step solves the Gauss-Newton model (misfit curvature through linearized
forward sweeps, plus the exact penalty curvature) with a truncated
preconditioned conjugate gradient, backtracks along the resulting
direction, and clamps onto the box.  A Polak-Ribiere-plus nonlinear CG
is available through the configuration; it is cheaper per iteration but
resolves the weakly determined coefficient modes far more slowly.
Everything is deterministic for fixed inputs.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .adjoint import (
    assemble_gradient,
    regularization_gradient,
    regularization_value,
    solve_adjoint,
)
from .cq import CQScheme
from .forward import (
    CoefficientField,
    LevelSystems,
    Trajectory,
    evaluate_state_misfit,
    initial_state,
    interior_loads,
    solve_forward,
)


@dataclass
class OptimizerConfig:
    """Settings for :func:`invert`.

    ``grad_tol`` stops the iteration once the gradient norm drops below
    that fraction of the initial one; ``grad_tol_abs`` catches starts at
    an exact stationary point.  ``algorithm`` selects ``'gauss-newton-cg'``
    (default) or ``'pr+'``; the remaining knobs apply to the algorithm
    that uses them.
    """

    max_iters: int = 100
    grad_tol: float = 1e-8
    grad_tol_abs: float = 1e-12
    algorithm: str = "gauss-newton-cg"
    # line search
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_line_search: int = 30
    # gauss-newton-cg
    inner_max: int = 30
    inner_rtol: float = 1e-2
    preconditioner: str = "auto"
    # pr+
    restart_period: int = 10
    step_rule: str = "gauss-newton"
    solver_method: str = "direct"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("line search shrink factor must lie in (0, 1)")
        if self.algorithm not in ("gauss-newton-cg", "pr+"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.step_rule not in ("gauss-newton", "cauchy"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.preconditioner not in ("auto", "reg", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class InversionProblem:
    """Data defining one coefficient recovery run."""

    mesh: object
    scheme: CQScheme
    u0: object
    observations: np.ndarray
    gamma: float
    c0: float = 0.5
    c1: float = 5.0
    f: object = None
    q_init: np.ndarray | None = None


@dataclass
class InversionResult:
    q_star: CoefficientField
    objective_history: list = field(repr=False)
    iterations_used: int = 0
    termination_reason: str = ""
    initial_gradient_norm: float = 0.0
    final_gradient_norm: float = 0.0
    n_forward_solves: int = 0
    n_gradient_solves: int = 0
    n_inner_iterations: int = 0


def project_box(q, c0: float, c1: float):
    """Componentwise clamp onto [c0, c1]; idempotent."""
    if not c0 < c1:
        raise ValueError(f"need c0 < c1, got [{c0}, {c1}]")
    if isinstance(q, CoefficientField):
        return CoefficientField(np.clip(q.levels, c0, c1), c0=c0, c1=c1)
    return np.clip(np.asarray(q, dtype=float), c0, c1)


def objective(problem: InversionProblem, q_levels: np.ndarray, method: str = "direct"):
    """Objective value and the forward trajectory it was computed from."""
    traj = solve_forward(problem.mesh, problem.scheme, q_levels, problem.u0, problem.f, method=method)
    J = evaluate_state_misfit(problem.mesh, problem.scheme, traj, problem.observations)
    J += regularization_value(problem.mesh, problem.scheme, q_levels, problem.gamma)
    return J, traj


def gradient(problem: InversionProblem, q_levels: np.ndarray, traj: Trajectory, method: str = "direct") -> np.ndarray:
    P = solve_adjoint(problem.mesh, problem.scheme, q_levels, traj, problem.observations, method=method)
    return assemble_gradient(problem.mesh, problem.scheme, q_levels, traj, P, problem.gamma)


class _Evaluator:
    """Objective/gradient/curvature machinery sharing per-level factors."""

    def __init__(self, problem: InversionProblem, config: OptimizerConfig):
        self.problem = problem
        self.mesh = problem.mesh
        self.scheme = problem.scheme
        self.config = config
        self.u0_int = initial_state(self.mesh, problem.u0)
        self.loads = interior_loads(self.mesh, self.scheme, problem.f)
        self.M_int = fem.interior_mass(self.mesh)
        self.dmap = fem.dof_map(self.mesh)
        self.n_forward = 0
        self.n_gradient = 0
        self.n_inner = 0

    def eval_objective(self, q):
        systems = LevelSystems(self.mesh, self.scheme, q, method=self.config.solver_method)
        U = systems.forward(self.u0_int, self.loads)
        self.n_forward += 1
        tau = self.scheme.tau
        R = U[1:] - self.problem.observations
        J = 0.5 * tau * float(np.sum((self.M_int @ R.T).T * R))
        J += regularization_value(self.mesh, self.scheme, q, self.problem.gamma)
        return J, U, systems

    def eval_gradient(self, q, U, systems: LevelSystems):
        P = systems.adjoint(U, self.problem.observations)
        self.n_gradient += 1
        traj = Trajectory(levels=U, tau=self.scheme.tau, alpha=self.scheme.alpha)
        return assemble_gradient(self.mesh, self.scheme, q, traj, P, self.problem.gamma)

    # -- Gauss-Newton pieces --------------------------------------------
    def misfit_curvature_apply(self, U, systems: LevelSystems, v):
        """Gauss-Newton product of the misfit: sensitivity then adjoint."""
        V = systems.sensitivity(U, v)
        self.n_inner += 1
        P = systems.adjoint(U, U[1:] - V)
        from .adjoint import _misfit_gradient

        return _misfit_gradient(self.mesh, self.dmap.extend(U[1:]), self.dmap.extend(P))

    def gn_apply(self, U, systems: LevelSystems, v):
        out = self.misfit_curvature_apply(U, systems, v)
        if self.problem.gamma > 0.0:
            out = out + regularization_gradient(self.mesh, self.scheme, v, self.problem.gamma)
        return out

    def slope_and_curvature(self, q, U, systems: LevelSystems, d):
        """First and second directional derivatives of the GN model."""
        V = systems.sensitivity(U, d)
        tau = self.scheme.tau
        gamma = self.problem.gamma
        R = U[1:] - self.problem.observations
        MV = (self.M_int @ V.T).T
        slope = tau * float(np.sum(MV * R))
        curv = tau * float(np.sum(MV * V))
        if gamma > 0.0:
            Rd = regularization_gradient(self.mesh, self.scheme, d, gamma)
            Rq = regularization_gradient(self.mesh, self.scheme, q, gamma)
            slope += float(np.vdot(Rq, d))
            curv += float(np.vdot(Rd, d))
        return slope, curv

    def mass_apply(self, v):
        Mf = fem.mass_matrix(self.mesh)
        return self.scheme.tau * (Mf @ v.T).T

    def build_preconditioner(self, mu: float):
        """Factor ``gamma * (penalty Hessian) + mu * (space-time mass)``."""
        mesh, scheme = self.mesh, self.scheme
        gamma = self.problem.gamma
        N = scheme.N
        tau = scheme.tau
        A1 = fem.unit_stiffness(mesh)
        Mf = fem.mass_matrix(mesh)
        D = sp.diags([np.full(N - 1, -1.0), np.ones(N - 1)], [0, 1], shape=(N - 1, N))
        B = tau * sp.kron(sp.identity(N, format="csr"), gamma * A1 + mu * Mf)
        if gamma > 0.0 and N > 1:
            B = B + (gamma / tau) * sp.kron(D.T @ D, Mf)
        lu = spla.splu(B.tocsc())
        n = mesh.n_nodes
        return lambda r: lu.solve(r.ravel()).reshape(N, n)


def _line_search(ev: _Evaluator, config: OptimizerConfig, q, J, G, d, step0: float):
    """Projected backtracking Armijo; returns the accepted point or None."""
    problem = ev.problem
    step = step0
    for _ in range(config.max_line_search):
        q_new = np.clip(q + step * d, problem.c0, problem.c1)
        s = q_new - q
        slope = float(np.vdot(G, s))
        if slope < 0.0:
            J_new, U_new, systems_new = ev.eval_objective(q_new)
            if J_new <= J + config.armijo_c * slope:
                return q_new, J_new, U_new, systems_new
        step *= config.shrink
    return None


def _invert_gauss_newton(problem: InversionProblem, config: OptimizerConfig) -> InversionResult:
    ev = _Evaluator(problem, config)
    q = _initial_iterate(problem)
    J, U, systems = ev.eval_objective(q)
    G = ev.eval_gradient(q, U, systems)
    g_norm = float(np.linalg.norm(G))
    g0_norm = g_norm
    history = [J]
    iterations = 0
    reason = "max-iters"

    use_precond = config.preconditioner == "reg" or (
        config.preconditioner == "auto" and problem.mesh.dim == 1
    )
    bsolve = None
    if use_precond and g_norm > config.grad_tol_abs:
        # mass shift from the data-curvature Rayleigh quotient along -G,
        # so the preconditioner treats data- and penalty-dominated modes
        # on comparable scales
        _, curv = ev.slope_and_curvature(q, U, systems, -G)
        denom = float(np.vdot(-G, ev.mass_apply(-G)))
        mu = max(curv / denom, 1e-300) if denom > 0 else 1.0
        bsolve = ev.build_preconditioner(mu)
    if bsolve is None:
        bsolve = lambda r: r

    for it in range(1, config.max_iters + 1):
        if g_norm <= max(config.grad_tol * g0_norm, config.grad_tol_abs):
            reason = "gradient-tol"
            break
        # truncated preconditioned CG on the Gauss-Newton model
        x = np.zeros_like(G)
        r = -G.copy()
        z = bsolve(r)
        p = z.copy()
        rz = float(np.vdot(r, z))
        r0 = float(np.linalg.norm(r.ravel()))
        for _ in range(config.inner_max):
            Hp = ev.gn_apply(U, systems, p)
            pHp = float(np.vdot(p, Hp))
            if pHp <= 0.0:
                break
            a = rz / pHp
            x += a * p
            r -= a * Hp
            if float(np.linalg.norm(r.ravel())) <= config.inner_rtol * r0:
                break
            z = bsolve(r)
            rz_new = float(np.vdot(r, z))
            p = z + (rz_new / rz) * p
            rz = rz_new

        accepted = None
        if float(np.vdot(G, x)) < 0.0:
            accepted = _line_search(ev, config, q, J, G, x, 1.0)
        if accepted is None:
            # steepest-descent fallback with the exact model step
            slope, curv = ev.slope_and_curvature(q, U, systems, -G)
            step0 = -slope / curv if curv > 0.0 and slope < 0.0 else J / max(g_norm**2, 1e-300)
            accepted = _line_search(ev, config, q, J, G, -G, step0)
        if accepted is None:
            reason = "line-search-failure"
            break
        q, J, U, systems = accepted
        G = ev.eval_gradient(q, U, systems)
        g_norm = float(np.linalg.norm(G))
        history.append(J)
        iterations = it

    return InversionResult(
        q_star=CoefficientField(q, c0=problem.c0, c1=problem.c1),
        objective_history=history,
        iterations_used=iterations,
        termination_reason=reason,
        initial_gradient_norm=g0_norm,
        final_gradient_norm=g_norm,
        n_forward_solves=ev.n_forward,
        n_gradient_solves=ev.n_gradient,
        n_inner_iterations=ev.n_inner,
    )


def _invert_pr_plus(problem: InversionProblem, config: OptimizerConfig) -> InversionResult:
    ev = _Evaluator(problem, config)
    q = _initial_iterate(problem)
    J, U, systems = ev.eval_objective(q)
    G = ev.eval_gradient(q, U, systems)
    g_norm = float(np.linalg.norm(G))
    g0_norm = g_norm
    history = [J]
    d = -G
    iterations = 0
    reason = "max-iters"

    for it in range(1, config.max_iters + 1):
        if g_norm <= max(config.grad_tol * g0_norm, config.grad_tol_abs):
            reason = "gradient-tol"
            break
        if float(np.vdot(G, d)) >= 0.0:
            d = -G
        if config.step_rule == "gauss-newton":
            slope, curv = ev.slope_and_curvature(q, U, systems, d)
            step0 = -slope / curv if curv > 0.0 and slope < 0.0 else 0.0
        else:
            step0 = 0.0
        if step0 <= 0.0:
            step0 = 2.0 * max(J, 1e-300) / g_norm**2
            step0 = min(step0, (problem.c1 - problem.c0) / max(float(np.max(np.abs(d))), 1e-300))

        accepted = _line_search(ev, config, q, J, G, d, step0)
        if accepted is None:
            reason = "line-search-failure"
            break
        q_new, J_new, U_new, systems_new = accepted
        G_new = ev.eval_gradient(q_new, U_new, systems_new)
        if it % config.restart_period == 0:
            beta = 0.0
        else:
            beta = max(0.0, float(np.vdot(G_new, G_new - G)) / max(float(np.vdot(G, G)), 1e-300))
        d = -G_new + beta * d
        q, J, G, U, systems = q_new, J_new, G_new, U_new, systems_new
        g_norm = float(np.linalg.norm(G))
        history.append(J)
        iterations = it

    return InversionResult(
        q_star=CoefficientField(q, c0=problem.c0, c1=problem.c1),
        objective_history=history,
        iterations_used=iterations,
        termination_reason=reason,
        initial_gradient_norm=g0_norm,
        final_gradient_norm=g_norm,
        n_forward_solves=ev.n_forward,
        n_gradient_solves=ev.n_gradient,
    )


def _initial_iterate(problem: InversionProblem) -> np.ndarray:
    scheme, mesh = problem.scheme, problem.mesh
    if problem.q_init is None:
        q = np.full((scheme.N, mesh.n_nodes), 0.5 * (problem.c0 + problem.c1))
    else:
        q = np.asarray(problem.q_init, dtype=float)
        if q.shape == (mesh.n_nodes,):
            q = np.tile(q, (scheme.N, 1))
        if q.shape != (scheme.N, mesh.n_nodes):
            raise ValueError("q_init has the wrong shape")
    return np.clip(q, problem.c0, problem.c1)


def invert(problem: InversionProblem, config: OptimizerConfig | None = None) -> InversionResult:
    """Minimize the regularized misfit over the box-constrained coefficients.

    Returns a feasible minimizer candidate together with the monotone
    objective history and the termination reason (``max-iters``,
    ``gradient-tol`` or ``line-search-failure``).
    """
    if config is None:
        config = OptimizerConfig()
    mesh, scheme = problem.mesh, problem.scheme
    if not problem.c0 < problem.c1:
        raise ValueError(f"infeasible bounds [{problem.c0}, {problem.c1}]")
    Z = np.asarray(problem.observations, dtype=float)
    if Z.shape != (scheme.N, mesh.n_interior):
        raise ValueError(
            f"observations must have shape {(scheme.N, mesh.n_interior)}, got {Z.shape}"
        )
    if problem.gamma < 0.0:
        raise ValueError("regularization weight must be nonnegative")
    if config.algorithm == "gauss-newton-cg":
        return _invert_gauss_newton(problem, config)
    return _invert_pr_plus(problem, config)
