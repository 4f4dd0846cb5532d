"""Backward Euler convolution quadrature for the Caputo derivative.

The quadrature weights are the power series coefficients of
``(1 - xi)**alpha``:  ``b_j = (-1)**j * binom(alpha, j)``, generated by
the exact recurrence ``b_0 = 1``, ``b_j = b_{j-1} * (j - 1 - alpha) / j``.
The first weight is 1 and all later weights are negative with
``sum_{j<=m} b_j`` equal to the order-(alpha-1) weight ``b_m``, which is
positive and decays like ``m**-alpha``.
"""

from dataclasses import dataclass, field

import numpy as np


def cq_weights(alpha: float, N: int) -> np.ndarray:
    """Weights ``b_0 .. b_N`` of backward Euler CQ of order ``alpha``.

    Parameters
    ----------
    alpha : float
        Fractional order, strictly between 0 and 1 (the recurrence is
        also valid for negative orders, used internally for the partial
        sums).
    N : int
        Largest weight index; at least 1.
    """
    if N < 1:
        raise ValueError(f"need N >= 1, got N={N}")
    j = np.arange(1, N + 1, dtype=float)
    factors = (j - 1.0 - alpha) / j
    return np.concatenate([[1.0], np.cumprod(factors)])


@dataclass(frozen=True, eq=False)
class CQScheme:
    """Time grid and CQ weights for fractional order ``alpha``.

    Attributes
    ----------
    alpha : float
        Fractional order in (0, 1).
    tau : float
        Time step.
    N : int
        Number of steps; the final time is ``N * tau``.
    weights : ndarray
        CQ weights ``b_0 .. b_N``.
    partial_sums : ndarray
        ``partial_sums[m] = sum_{j<=m} weights[j]``, computed through the
        order-(alpha-1) recurrence to avoid cancellation.
    """

    alpha: float
    tau: float
    N: int
    weights: np.ndarray = field(repr=False)
    partial_sums: np.ndarray = field(repr=False)

    @property
    def T(self) -> float:
        return self.N * self.tau

    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.N + 1)


def make_scheme(alpha: float, T: float, N: int) -> CQScheme:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"fractional order must lie in (0, 1), got alpha={alpha}")
    if N < 1:
        raise ValueError(f"need N >= 1, got N={N}")
    if T <= 0.0:
        raise ValueError(f"final time must be positive, got T={T}")
    return CQScheme(
        alpha=alpha,
        tau=T / N,
        N=N,
        weights=cq_weights(alpha, N),
        partial_sums=cq_weights(alpha - 1.0, N),
    )


def discrete_caputo(scheme: CQScheme, trajectory: np.ndarray, n: int) -> np.ndarray:
    """CQ approximation of the Caputo derivative of a trajectory at step ``n``.

    Evaluates ``tau**-alpha * sum_{j=0}^{n} b_j * (phi^{n-j} - phi^0)``
    for a trajectory of shape ``(levels, ...)`` with the baseline in row 0.
    """
    trajectory = np.asarray(trajectory, dtype=float)
    if not 0 <= n <= scheme.N:
        raise ValueError(f"step index {n} outside 0..{scheme.N}")
    if trajectory.shape[0] < n + 1:
        raise ValueError(f"trajectory has {trajectory.shape[0]} levels, need {n + 1}")
    diff = trajectory[: n + 1] - trajectory[0]
    b = scheme.weights[: n + 1]
    return scheme.tau ** (-scheme.alpha) * np.tensordot(b, diff[::-1], axes=(0, 0))
