"""P1 finite element assembly on the meshes of :mod:`fracinv.mesh`.

Mass and stiffness matrices are assembled with exact per-element
quadrature.  The coefficient entering the stiffness matrix is the P1
interpolant of its nodal values, integrated exactly against the constant
element gradients (the element value is the mean of the vertex values).
Dirichlet conditions are imposed by restriction to interior nodes.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass(frozen=True)
class DofMap:
    """Maps interior degrees of freedom to full node indices."""

    interior_of_full: np.ndarray
    n_full: int

    @property
    def n_interior(self) -> int:
        return self.interior_of_full.size

    def restrict(self, v_full: np.ndarray) -> np.ndarray:
        return np.asarray(v_full)[..., self.interior_of_full]

    def extend(self, v_int: np.ndarray) -> np.ndarray:
        """Extend interior values by zero to the full node set."""
        v_int = np.asarray(v_int)
        out = np.zeros(v_int.shape[:-1] + (self.n_full,), dtype=v_int.dtype)
        out[..., self.interior_of_full] = v_int
        return out


def dof_map(mesh) -> DofMap:
    return DofMap(interior_of_full=mesh.interior, n_full=mesh.n_nodes)


@lru_cache(maxsize=None)
def _assembly_data(mesh):
    """Per-mesh cached element data: indices, local matrices, gradients."""
    nv = mesh.dim + 1
    elems = mesh.elements
    measures = mesh.element_measures()
    pts = mesh.nodes[elems]

    if mesh.dim == 1:
        local_mass = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
        mass = measures[:, None, None] * local_mass
        # gradients of the two nodal basis functions on each segment
        h = measures
        grads = np.stack([-1.0 / h, 1.0 / h], axis=1)[:, :, None]
    else:
        local_mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
        mass = measures[:, None, None] * local_mass
        # grad of barycentric coordinate i: ((y_j - y_k), (x_k - x_j)) / (2A)
        x = pts[:, :, 0]
        y = pts[:, :, 1]
        j = [1, 2, 0]
        k = [2, 0, 1]
        bx = y[:, j] - y[:, k]
        by = x[:, k] - x[:, j]
        grads = np.stack([bx, by], axis=2) / (2.0 * measures)[:, None, None]

    # geometric stiffness: |e| * grad_i . grad_j (coefficient applied later)
    geo = measures[:, None, None] * np.einsum("eid,ejd->eij", grads, grads)
    rows = np.repeat(elems, nv, axis=1).ravel()
    cols = np.tile(elems, (1, nv)).ravel()
    return rows, cols, mass, geo, grads, measures


def assemble_mass(mesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix on the full node set."""
    rows, cols, mass, _, _, _ = _assembly_data(mesh)
    n = mesh.n_nodes
    return sp.coo_matrix((mass.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(mesh, q_nodal: np.ndarray) -> sp.csr_matrix:
    """Stiffness matrix weighted by the P1 interpolant of ``q_nodal``.

    The element integral of a P1 coefficient against constant gradients
    equals the vertex mean times the geometric stiffness, so the
    assembly is exact for coefficients in the P1 space.
    """
    q_nodal = np.asarray(q_nodal, dtype=float)
    if q_nodal.shape != (mesh.n_nodes,):
        raise ValueError(f"coefficient must have {mesh.n_nodes} nodal values, got {q_nodal.shape}")
    if not np.all(np.isfinite(q_nodal)):
        raise ValueError("coefficient contains non-finite values")
    rows, cols, _, geo, _, _ = _assembly_data(mesh)
    q_elem = q_nodal[mesh.elements].mean(axis=1)
    vals = (geo * q_elem[:, None, None]).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


@lru_cache(maxsize=None)
def _mass_cached(mesh) -> sp.csr_matrix:
    return assemble_mass(mesh)


@lru_cache(maxsize=None)
def _unit_stiffness_cached(mesh) -> sp.csr_matrix:
    return assemble_stiffness(mesh, np.ones(mesh.n_nodes))


def mass_matrix(mesh) -> sp.csr_matrix:
    """Cached consistent mass matrix (full node set)."""
    return _mass_cached(mesh)


def unit_stiffness(mesh) -> sp.csr_matrix:
    """Cached stiffness matrix for unit coefficient (full node set)."""
    return _unit_stiffness_cached(mesh)


def interior_matrix(mesh, A: sp.csr_matrix) -> sp.csr_matrix:
    idx = mesh.interior
    return A[np.ix_(idx, idx)].tocsr()


@lru_cache(maxsize=None)
def interior_mass(mesh) -> sp.csr_matrix:
    return interior_matrix(mesh, mass_matrix(mesh))


@lru_cache(maxsize=None)
def _interior_pattern(mesh):
    """Precomputed sparsity data for assembling directly on interior dofs."""
    rows, cols, _, _, _, _ = _assembly_data(mesh)
    int_of_full = -np.ones(mesh.n_nodes, dtype=int)
    int_of_full[mesh.interior] = np.arange(mesh.n_interior)
    ri = int_of_full[rows]
    ci = int_of_full[cols]
    keep = (ri >= 0) & (ci >= 0)
    return ri[keep], ci[keep], keep


def assemble_stiffness_interior(mesh, q_nodal: np.ndarray) -> sp.csr_matrix:
    """Stiffness matrix restricted to interior nodes, assembled in place."""
    _, _, _, geo, _, _ = _assembly_data(mesh)
    ri, ci, keep = _interior_pattern(mesh)
    q_elem = np.asarray(q_nodal, dtype=float)[mesh.elements].mean(axis=1)
    vals = (geo * q_elem[:, None, None]).ravel()[keep]
    n = mesh.n_interior
    return sp.coo_matrix((vals, (ri, ci)), shape=(n, n)).tocsr()


def stiffness_action(mesh, coeff_levels: np.ndarray, u_full_levels: np.ndarray) -> np.ndarray:
    """Products ``A(c^n) u^n`` on the full node set for every level at once.

    ``coeff_levels`` and ``u_full_levels`` have shape (N, n_nodes); the
    result matches.  Avoids assembling one sparse matrix per level.
    """
    _, _, _, geo, _, _ = _assembly_data(mesh)
    elems = mesh.elements
    c_e = coeff_levels[:, elems].mean(axis=2)
    loc = np.einsum("eij,nej->nei", geo, u_full_levels[:, elems]) * c_e[:, :, None]
    out = np.zeros((mesh.n_nodes, coeff_levels.shape[0]))
    for v in range(mesh.dim + 1):
        np.add.at(out, elems[:, v], loc[:, :, v].T)
    return out.T


def assemble_load(mesh, f, t: float = 0.0) -> np.ndarray:
    """Load vector for a source ``f(points, t)`` on the full node set.

    The source is sampled at the nodes and multiplied by the consistent
    mass matrix, which is second-order accurate and keeps the discrete
    adjoint exact.
    """
    f_nodal = np.asarray(f(mesh.nodes, t), dtype=float)
    if f_nodal.shape != (mesh.n_nodes,):
        raise ValueError(f"source must produce {mesh.n_nodes} nodal values, got {f_nodal.shape}")
    if not np.all(np.isfinite(f_nodal)):
        raise ValueError("source produced non-finite values")
    return mass_matrix(mesh) @ f_nodal


def lagrange_interpolate(mesh, g) -> np.ndarray:
    """Nodal samples of ``g`` over the full node set."""
    vals = np.asarray(g(mesh.nodes), dtype=float)
    if vals.shape != (mesh.n_nodes,):
        raise ValueError(f"interpolant must produce {mesh.n_nodes} values, got {vals.shape}")
    if not np.all(np.isfinite(vals)):
        raise ValueError("interpolation target produced non-finite values")
    return vals


def l2_project(mesh, v) -> np.ndarray:
    """L2 projection onto the interior P1 space (zero boundary values).

    ``v`` is either a callable of the node coordinates or a nodal vector
    on the full node set.  Returns interior nodal values.
    """
    if callable(v):
        v_nodal = lagrange_interpolate(mesh, v)
    else:
        v_nodal = np.asarray(v, dtype=float)
        if v_nodal.shape != (mesh.n_nodes,):
            raise ValueError(f"expected {mesh.n_nodes} nodal values, got {v_nodal.shape}")
    idx = mesh.interior
    rhs = (mass_matrix(mesh) @ v_nodal)[idx]
    M_int = interior_matrix(mesh, mass_matrix(mesh))
    sol = spla.spsolve(M_int.tocsc(), rhs)
    assert np.all(np.isfinite(sol)), "mass solve failed on a valid mesh"
    return sol


def _as_full(mesh, v: np.ndarray) -> np.ndarray:
    """Accept full or interior-length nodal vectors; interior ones are
    extended by zero (consistent with the zero Dirichlet condition)."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] == mesh.n_nodes:
        return v
    if v.shape[-1] == mesh.n_interior:
        return dof_map(mesh).extend(v)
    raise ValueError(
        f"vector length {v.shape[-1]} matches neither full ({mesh.n_nodes}) "
        f"nor interior ({mesh.n_interior}) node count"
    )


def l2_norm(mesh, v: np.ndarray) -> float:
    """L2(Omega) norm of a P1 field given by nodal values."""
    v = _as_full(mesh, v)
    return float(np.sqrt(max(v @ (mass_matrix(mesh) @ v), 0.0)))


def h1_seminorm(mesh, v: np.ndarray) -> float:
    """H1 seminorm of a P1 field given by nodal values."""
    v = _as_full(mesh, v)
    return float(np.sqrt(max(v @ (unit_stiffness(mesh) @ v), 0.0)))


def element_gradients(mesh, v_full: np.ndarray) -> np.ndarray:
    """Constant gradient of a P1 field on every element, shape (n_el, dim)."""
    _, _, _, _, grads, _ = _assembly_data(mesh)
    v = _as_full(mesh, v_full)
    return np.einsum("eid,ei->ed", grads, v[mesh.elements])


def nodal_gradient_square(mesh, v_full: np.ndarray) -> np.ndarray:
    """Volume-weighted nodal average of the squared P1 gradient."""
    _, _, _, _, _, measures = _assembly_data(mesh)
    g2 = np.sum(element_gradients(mesh, v_full) ** 2, axis=1)
    num = np.zeros(mesh.n_nodes)
    den = np.zeros(mesh.n_nodes)
    for v in range(mesh.dim + 1):
        np.add.at(num, mesh.elements[:, v], measures * g2)
        np.add.at(den, mesh.elements[:, v], measures)
    return num / den
