"""Time stepping of the fully discrete subdiffusion scheme.

At every step ``n`` the scheme solves

    (tau^-alpha * M + A(q^n)) U^n
        = F^n + tau^-alpha * M * (S_n * U^0 - sum_{j=1}^{n} b_j U^{n-j})

on the interior nodes, where ``S_n = sum_{j<=n} b_j`` is evaluated
through the order-(alpha-1) weight recurrence to avoid cancellation.
The per-step matrix is symmetric positive definite for any admissible
coefficient.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import fem
from .cq import CQScheme
from .linalg import SPDFactor

try:
    from . import _kernels

    _HAVE_KERNELS = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_KERNELS = False


class SolverError(RuntimeError):
    """Linear solver breakdown at a given time step."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass
class CoefficientField:
    """Nodal coefficient values per time level with box bounds.

    ``levels[n-1]`` holds the coefficient at time ``t_n`` on the full
    node set; the field is piecewise constant in time and P1 in space.
    """

    levels: np.ndarray
    c0: float = 0.5
    c1: float = 5.0

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        if self.levels.ndim != 2:
            raise ValueError("coefficient levels must be a (N, n_nodes) array")
        if not self.c0 < self.c1:
            raise ValueError(f"need c0 < c1, got [{self.c0}, {self.c1}]")

    @property
    def N(self) -> int:
        return self.levels.shape[0]

    def within_bounds(self, tol: float = 0.0) -> bool:
        return bool(
            np.all(self.levels >= self.c0 - tol) and np.all(self.levels <= self.c1 + tol)
        )


@dataclass
class Trajectory:
    """Interior nodal values of the state at levels 0..N."""

    levels: np.ndarray = field(repr=False)
    tau: float = 0.0
    alpha: float = 0.0

    @property
    def N(self) -> int:
        return self.levels.shape[0] - 1


def coefficient_levels(mesh, scheme: CQScheme, q) -> np.ndarray:
    """Validate and return coefficient values as a (N, n_nodes) array."""
    if isinstance(q, CoefficientField):
        if not q.within_bounds():
            raise ValueError(f"coefficient violates the box bounds [{q.c0}, {q.c1}]")
        levels = q.levels
    else:
        levels = np.asarray(q, dtype=float)
    if levels.shape != (scheme.N, mesh.n_nodes):
        raise ValueError(
            f"expected coefficient of shape {(scheme.N, mesh.n_nodes)}, got {levels.shape}"
        )
    if not np.all(np.isfinite(levels)):
        raise ValueError("coefficient contains non-finite values")
    return levels


def initial_state(mesh, u0) -> np.ndarray:
    """Interior nodal values of the projected initial datum.

    Callables and full nodal vectors are L2-projected; an interior-length
    vector is taken to lie in the state space already.
    """
    if callable(u0):
        return fem.l2_project(mesh, u0)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape == (mesh.n_interior,):
        return u0.copy()
    if u0.shape == (mesh.n_nodes,):
        return fem.l2_project(mesh, u0)
    raise ValueError(
        f"initial datum length {u0.shape} matches neither full ({mesh.n_nodes}) "
        f"nor interior ({mesh.n_interior}) node count"
    )


def interior_loads(mesh, scheme: CQScheme, f) -> np.ndarray:
    """Interior load vectors at t_1..t_N, shape (N, n_interior)."""
    idx = mesh.interior
    if f is None:
        return np.zeros((scheme.N, idx.size))
    out = np.empty((scheme.N, idx.size))
    for n in range(1, scheme.N + 1):
        out[n - 1] = fem.assemble_load(mesh, f, n * scheme.tau)[idx]
    return out


class LevelSystems:
    """Per-level SPD systems ``tau^-alpha M + A(q^n)`` with shared factors.

    The forward, adjoint, and sensitivity sweeps all solve against the
    same per-level matrices, so factorizations are shared.  In 1D the
    systems are tridiagonal; they are assembled in banded form for all
    levels at once and the Cholesky factors are kept (a few floats per
    unknown).  In 2D each level holds a sparse LU, kept only when the
    coefficient does not change over time (otherwise sweeps refactor on
    the fly, trading time for memory).
    """

    def __init__(self, mesh, scheme: CQScheme, q_levels: np.ndarray, method: str = "direct"):
        self.mesh = mesh
        self.scheme = scheme
        self.q_levels = q_levels
        self.method = method
        self.M_int = fem.interior_mass(mesh)
        self.tam = scheme.tau ** (-scheme.alpha)
        self.time_independent = bool(np.all(q_levels == q_levels[0]))
        self._banded = mesh.dim == 1 and method == "direct" and _HAVE_KERNELS
        if self._banded:
            self._init_banded()
        self._factors: dict[int, SPDFactor] = {}

    # -- tridiagonal fast path -------------------------------------------
    def _init_banded(self):
        mesh, scheme = self.mesh, self.scheme
        h = mesh.h
        q_e = 0.5 * (self.q_levels[:, :-1] + self.q_levels[:, 1:])
        n_int = mesh.n_interior
        self._diag = self.tam * (2.0 * h / 3.0) + (q_e[:, :-1] + q_e[:, 1:]) / h
        self._off = np.ascontiguousarray(self.tam * (h / 6.0) - q_e[:, 1:-1] / h)
        self._fac = None
        self._b_rev = np.ascontiguousarray(scheme.weights[::-1])

    def _ensure_factors(self):
        if self._fac is None:
            d = np.empty_like(self._diag)
            e = np.empty_like(self._off)
            _kernels.factor_all(self._diag, self._off, d, e)
            self._fac = (d, e)

    def _check_banded(self, X: np.ndarray, rhs_levels: np.ndarray, what: str):
        """Batched residual verification, rows indexed by time level 1..N."""
        r = self._diag * X
        if X.shape[1] > 1:
            r[:, :-1] += self._off * X[:, 1:]
            r[:, 1:] += self._off * X[:, :-1]
        res = np.linalg.norm(r - rhs_levels, axis=1)
        rhs_norms = np.linalg.norm(rhs_levels, axis=1)
        bad = ~(np.isfinite(res) & (res <= 1e-10 * np.maximum(rhs_norms, 1e-300)))
        if np.any(bad):
            step = 1 + int(np.argmax(bad))
            raise SolverError(f"{what} solve at step {step} missed the residual tolerance", step=step)

    # -- generic path ------------------------------------------------------
    def _factor(self, n: int) -> SPDFactor:
        key = 1 if self.time_independent else n
        fac = self._factors.get(key)
        if fac is None:
            A = fem.assemble_stiffness_interior(self.mesh, self.q_levels[key - 1])
            fac = SPDFactor(self.tam * self.M_int + A, method=self.method)
            if self.time_independent:
                self._factors[key] = fac
        return fac

    def _step_generic(self, n: int, rhs: np.ndarray, what: str) -> np.ndarray:
        fac = self._factor(n)
        try:
            x = fac.solve(rhs)
        except (FloatingPointError, RuntimeError) as exc:
            raise SolverError(f"{what} solve failed at step {n}: {exc}", step=n) from exc
        if not fac.residual_ok(x, rhs):
            raise SolverError(f"{what} solve at step {n} missed the residual tolerance", step=n)
        return x

    # -- sweeps --------------------------------------------------------------
    def _mass_consts(self):
        h = self.mesh.h
        return 2.0 * h / 3.0, h / 6.0

    def _sweep_causal(self, base: np.ndarray, s_coef: np.ndarray, x0: np.ndarray, what: str) -> np.ndarray:
        """Forward-in-time sweep: K_n X^n = base^n + tam*M*(s_n x0 - hist)."""
        scheme = self.scheme
        N = scheme.N
        n_int = self.mesh.n_interior
        X = np.zeros((N + 1, n_int))
        if self._banded:
            self._ensure_factors()
            mdiag, moff = self._mass_consts()
            rhs_levels = np.empty((N, n_int))
            _kernels.sweep_causal(
                self._fac[0], self._fac[1], mdiag, moff, self.tam,
                scheme.weights, self._b_rev, base, s_coef,
                np.ascontiguousarray(x0, dtype=float), X, rhs_levels,
            )
            self._check_banded(X[1:], rhs_levels, what)
            return X
        b = scheme.weights
        X[0] = x0
        for n in range(1, N + 1):
            hist = b[1 : n + 1][::-1] @ X[:n]
            rhs = base[n - 1] + self.tam * (self.M_int @ (s_coef[n] * X[0] - hist))
            X[n] = self._step_generic(n, rhs, what)
        return X

    def forward(self, u0_int: np.ndarray, loads: np.ndarray) -> np.ndarray:
        """Levels ``U^0..U^N`` of the state, shape (N+1, n_interior)."""
        u0_int = np.asarray(u0_int, dtype=float)
        return self._sweep_causal(loads, self.scheme.partial_sums, u0_int, "forward")

    def adjoint(self, U: np.ndarray, observations: np.ndarray) -> np.ndarray:
        """Adjoint levels ``P^1..P^N`` of the misfit, shape (N, n_interior)."""
        scheme = self.scheme
        b = scheme.weights
        N = scheme.N
        n_int = self.mesh.n_interior
        R = U[1:] - observations
        base = -scheme.tau * (self.M_int @ R.T).T
        X = np.zeros((N + 1, n_int))
        if self._banded:
            self._ensure_factors()
            mdiag, moff = self._mass_consts()
            rhs_levels = np.empty((N, n_int))
            _kernels.sweep_anticausal(
                self._fac[0], self._fac[1], mdiag, moff, self.tam,
                scheme.weights, np.ascontiguousarray(base), X, rhs_levels,
            )
            self._check_banded(X[1:], rhs_levels, "adjoint")
            return X[1:]
        for m in range(N, 0, -1):
            hist = b[1 : N - m + 1] @ X[m + 1 :]
            rhs = base[m - 1] - self.tam * (self.M_int @ hist)
            X[m] = self._step_generic(m, rhs, "adjoint")
        return X[1:]

    def sensitivity(self, U: np.ndarray, d_levels: np.ndarray) -> np.ndarray:
        """Directional state derivative ``V^1..V^N`` for a coefficient
        perturbation ``d``: linearizes the scheme around ``q``."""
        idx = self.mesh.interior
        dmap = fem.dof_map(self.mesh)
        source = -fem.stiffness_action(self.mesh, d_levels, dmap.extend(U[1:]))[:, idx]
        zeros = np.zeros(idx.size)
        V = self._sweep_causal(
            np.ascontiguousarray(source), np.zeros(self.scheme.N + 1), zeros, "sensitivity"
        )
        return V[1:]


def solve_forward(mesh, scheme: CQScheme, q, u0, f=None, method: str = "direct") -> Trajectory:
    """March the fully discrete scheme from ``U^0 = P_h u0`` to ``U^N``.

    Parameters
    ----------
    mesh : Mesh
    scheme : CQScheme
    q : CoefficientField or ndarray, shape (N, n_nodes)
        Coefficient per time level on the full node set.
    u0 : callable or ndarray
        Initial datum.
    f : callable of (points, t), optional
        Source term; ``None`` means zero.
    method : str
        ``'direct'`` (banded Cholesky in 1D, sparse LU in 2D) or ``'cg'``.
    """
    q_levels = coefficient_levels(mesh, scheme, q)
    systems = LevelSystems(mesh, scheme, q_levels, method=method)
    U = systems.forward(initial_state(mesh, u0), interior_loads(mesh, scheme, f))
    return Trajectory(levels=U, tau=scheme.tau, alpha=scheme.alpha)


def evaluate_state_misfit(mesh, scheme: CQScheme, trajectory, observations: np.ndarray) -> float:
    """Data misfit ``0.5 * tau * sum_n ||U^n - z_n||_L2^2`` (interior nodes)."""
    U = trajectory.levels if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    Z = np.asarray(observations, dtype=float)
    if U.shape[0] == scheme.N + 1:
        U = U[1:]
    if U.shape != (scheme.N, mesh.n_interior) or Z.shape != U.shape:
        raise ValueError(
            f"state levels {U.shape} and observations {Z.shape} must both have shape "
            f"{(scheme.N, mesh.n_interior)}"
        )
    M_int = fem.interior_matrix(mesh, fem.mass_matrix(mesh))
    R = U - Z
    return 0.5 * scheme.tau * float(np.sum((M_int @ R.T).T * R))
