"""Numba kernels for the tridiagonal (1D) time-stepping sweeps.

These remove the per-step Python and SciPy call overhead from the inner
loops; the history convolution stays in BLAS through ``np.dot``.  The
module is optional: importing it may fail where numba is unavailable,
and callers fall back to the SciPy path.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def tridiag_cholesky(diag, off, d, e):
    """LL^T factorization of an SPD tridiagonal matrix (in-place outputs)."""
    n = diag.shape[0]
    d[0] = np.sqrt(diag[0])
    for i in range(1, n):
        e[i - 1] = off[i - 1] / d[i - 1]
        d[i] = np.sqrt(diag[i] - e[i - 1] * e[i - 1])


@njit(cache=True)
def factor_all(diag_levels, off_levels, d_out, e_out):
    for m in range(diag_levels.shape[0]):
        tridiag_cholesky(diag_levels[m], off_levels[m], d_out[m], e_out[m])


@njit(cache=True, inline="always")
def _solve_inplace(d, e, x):
    n = d.shape[0]
    x[0] = x[0] / d[0]
    for i in range(1, n):
        x[i] = (x[i] - e[i - 1] * x[i - 1]) / d[i]
    x[n - 1] = x[n - 1] / d[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = (x[i] - e[i] * x[i + 1]) / d[i]


@njit(cache=True, inline="always")
def _mass_apply(v, mdiag, moff, out):
    n = v.shape[0]
    for i in range(n):
        out[i] = mdiag * v[i]
    for i in range(n - 1):
        out[i] += moff * v[i + 1]
        out[i + 1] += moff * v[i]


@njit(cache=True)
def sweep_causal(d_fac, e_fac, mdiag, moff, tam, b, b_rev, base, s_coef, x0, X, rhs_store):
    """Forward-in-time sweep shared by the state and sensitivity solves.

    Solves, for n = 1..N,
        K_n X[n] = base[n-1] + tam * M (s_coef[n] * x0 - sum_{j>=1} b_j X[n-j])
    where the Cholesky factors of K_n are in ``d_fac/e_fac``.
    """
    N = base.shape[0]
    n = base.shape[1]
    X[0] = x0
    tmp = np.empty(n)
    mv = np.empty(n)
    for step in range(1, N + 1):
        hist = np.dot(b_rev[N - step : N], X[:step])
        for k in range(n):
            tmp[k] = s_coef[step] * x0[k] - hist[k]
        _mass_apply(tmp, mdiag, moff, mv)
        for k in range(n):
            mv[k] = base[step - 1, k] + tam * mv[k]
            rhs_store[step - 1, k] = mv[k]
        _solve_inplace(d_fac[step - 1], e_fac[step - 1], mv)
        X[step] = mv


@njit(cache=True)
def sweep_anticausal(d_fac, e_fac, mdiag, moff, tam, b, base, X, rhs_store):
    """Backward-in-time sweep for the adjoint solve.

    Solves, for m = N..1,
        K_m X[m] = base[m-1] - tam * M (sum_{j>=1} b_j X[m+j]).
    """
    N = base.shape[0]
    n = base.shape[1]
    mv = np.empty(n)
    tmp = np.empty(n)
    for m in range(N, 0, -1):
        if m < N:
            hist = np.dot(b[1 : N - m + 1], X[m + 1 : N + 1])
        else:
            hist = np.zeros(n)
        _mass_apply(hist, mdiag, moff, tmp)
        for k in range(n):
            mv[k] = base[m - 1, k] - tam * tmp[k]
            rhs_store[m - 1, k] = mv[k]
        _solve_inplace(d_fac[m - 1], e_fac[m - 1], mv)
        X[m] = mv
