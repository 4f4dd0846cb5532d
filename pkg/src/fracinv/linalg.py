"""Direct and iterative solvers for the per-step SPD systems."""

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SPDFactor:
    """Factorization of a sparse SPD matrix with a residual-checked solve.

    In 1D the interior systems are tridiagonal and solved by banded
    Cholesky; otherwise a sparse LU is used.  ``method='cg'`` selects a
    Jacobi-preconditioned conjugate gradient fallback intended for
    meshes too large to factor.
    """

    def __init__(self, K: sp.spmatrix, tridiagonal: bool = False, method: str = "direct"):
        self.K = K.tocsr()
        self.n = K.shape[0]
        self.method = method
        if method == "cg":
            self._inv_diag = 1.0 / self.K.diagonal()
            return
        if method != "direct":
            raise ValueError(f"unknown solver method {method!r}")
        if tridiagonal:
            ab = np.zeros((2, self.n))
            ab[1] = self.K.diagonal()
            if self.n > 1:
                ab[0, 1:] = self.K.diagonal(1)
            self._banded = scipy.linalg.cholesky_banded(ab)
            self._lu = None
        else:
            self._banded = None
            self._lu = spla.splu(self.K.tocsc())

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.method == "cg":
            precond = spla.LinearOperator(self.K.shape, matvec=lambda v: self._inv_diag * v)
            x, info = spla.cg(self.K, rhs, rtol=1e-12, atol=0.0, maxiter=10 * self.n, M=precond)
            if info != 0:
                raise FloatingPointError(f"preconditioned CG did not converge (info={info})")
            return x
        if self._banded is not None:
            return scipy.linalg.cho_solve_banded((self._banded, False), rhs)
        return self._lu.solve(rhs)

    def residual_ok(self, x: np.ndarray, rhs: np.ndarray, rtol: float = 1e-10) -> bool:
        r = self.K @ x - rhs
        scale = np.linalg.norm(rhs)
        return bool(np.all(np.isfinite(x)) and np.linalg.norm(r) <= rtol * max(scale, 1e-300))
