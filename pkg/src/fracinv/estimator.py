"""Scikit-learn style front end for the coefficient recovery."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from .cq import make_scheme
from .forward import solve_forward
from .inversion import InversionProblem, OptimizerConfig, invert
from .mesh import build_interval_mesh, build_square_mesh


class SubdiffusionCoefficientEstimator(BaseEstimator):
    """Recover a space-time diffusion coefficient from observed states.

    ``fit`` takes the observation matrix with one row per time level and
    one column per interior mesh node and estimates the nodal coefficient
    levels by regularized output least squares.  ``predict`` returns the
    simulated state of the fitted coefficient on the same grid, so the
    estimator composes with standard model-selection tooling.

    Parameters
    ----------
    dim : int
        Spatial dimension (1 or 2).
    subdivisions : int
        Mesh subdivisions per axis.
    n_steps : int
        Number of time steps.
    final_time : float
        Time horizon of the observations.
    alpha : float
        Fractional order of the model, in (0, 1).
    gamma : float
        Regularization weight of the space-time gradient penalty.
    lower, upper : float
        Box bounds of the admissible coefficients.
    u0 : callable
        Initial state, evaluated on node coordinates of shape (n, dim).
    source : callable of (points, t), optional
        Source term of the model; ``None`` means zero.
    q_init : ndarray, optional
        Starting coefficient (defaults to the box midpoint).
    max_iter : int
        Cap on projected conjugate gradient iterations.
    grad_tol : float
        Relative gradient-norm stopping tolerance.
    """

    def __init__(
        self,
        dim=1,
        subdivisions=40,
        n_steps=100,
        final_time=0.1,
        alpha=0.5,
        gamma=1e-10,
        lower=0.5,
        upper=5.0,
        u0=None,
        source=None,
        q_init=None,
        max_iter=100,
        grad_tol=1e-8,
    ):
        self.dim = dim
        self.subdivisions = subdivisions
        self.n_steps = n_steps
        self.final_time = final_time
        self.alpha = alpha
        self.gamma = gamma
        self.lower = lower
        self.upper = upper
        self.u0 = u0
        self.source = source
        self.q_init = q_init
        self.max_iter = max_iter
        self.grad_tol = grad_tol

    def _grid(self):
        if self.dim == 1:
            mesh = build_interval_mesh(self.subdivisions)
        elif self.dim == 2:
            mesh = build_square_mesh(self.subdivisions)
        else:
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        return mesh, make_scheme(self.alpha, self.final_time, self.n_steps)

    def fit(self, Z, y=None):
        """Estimate the coefficient from observations Z of shape (n_steps, n_interior)."""
        if self.u0 is None:
            raise ValueError("an initial state u0 is required to simulate the model")
        mesh, scheme = self._grid()
        Z = check_array(Z, dtype=np.float64, ensure_2d=True)
        if Z.shape != (scheme.N, mesh.n_interior):
            raise ValueError(
                f"observations must have shape {(scheme.N, mesh.n_interior)}, got {Z.shape}"
            )
        problem = InversionProblem(
            mesh=mesh,
            scheme=scheme,
            u0=self.u0,
            observations=Z,
            gamma=self.gamma,
            c0=self.lower,
            c1=self.upper,
            f=self.source,
            q_init=self.q_init,
        )
        config = OptimizerConfig(max_iters=self.max_iter, grad_tol=self.grad_tol)
        result = invert(problem, config)
        self.mesh_ = mesh
        self.scheme_ = scheme
        self.result_ = result
        self.coefficient_ = result.q_star.levels
        self.objective_history_ = list(result.objective_history)
        self.n_iter_ = result.iterations_used
        self.termination_reason_ = result.termination_reason
        return self

    def predict(self, Z=None):
        """Simulated observations of the fitted coefficient, shape (n_steps, n_interior)."""
        if not hasattr(self, "coefficient_"):
            raise NotFittedError("call fit before predict")
        traj = solve_forward(self.mesh_, self.scheme_, self.coefficient_, self.u0, self.source)
        return traj.levels[1:]

    def score(self, Z, y=None):
        """Negative mean squared deviation between prediction and Z."""
        Z = check_array(Z, dtype=np.float64, ensure_2d=True)
        pred = self.predict()
        if Z.shape != pred.shape:
            raise ValueError(f"observations must have shape {pred.shape}, got {Z.shape}")
        return -float(np.mean((pred - Z) ** 2))
