"""Uniform simplicial meshes of the unit interval and the unit square.

Nodes are ordered lexicographically by lattice index so that repeated
runs are bit-reproducible.  In 2D every lattice cell is split into two
triangles along its lower-left to upper-right diagonal.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform mesh of (0,1) or (0,1)^2 with node/element bookkeeping.

    Attributes
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    M : int
        Number of subdivisions per axis; the mesh size is ``h = 1/M``.
    nodes : ndarray, shape (n_nodes, dim)
        Node coordinates.
    elements : ndarray, shape (n_elements, dim + 1)
        Node indices per element (segments in 1D, triangles in 2D).
    boundary_mask : ndarray of bool, shape (n_nodes,)
        True exactly at nodes lying on the domain boundary.
    """

    dim: int
    M: int
    nodes: np.ndarray = field(repr=False)
    elements: np.ndarray = field(repr=False)
    boundary_mask: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def interior(self) -> np.ndarray:
        """Indices of interior nodes (the Dirichlet degrees of freedom)."""
        return np.flatnonzero(~self.boundary_mask)

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(~self.boundary_mask))

    def element_measures(self) -> np.ndarray:
        """Length (1D) or area (2D) of every element."""
        pts = self.nodes[self.elements]
        if self.dim == 1:
            return np.abs(pts[:, 1, 0] - pts[:, 0, 0])
        d1 = pts[:, 1] - pts[:, 0]
        d2 = pts[:, 2] - pts[:, 0]
        return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_distance(self) -> np.ndarray:
        """Exact distance of every node to the domain boundary."""
        x = self.nodes
        if self.dim == 1:
            return np.minimum(x[:, 0], 1.0 - x[:, 0])
        return np.minimum.reduce([x[:, 0], 1.0 - x[:, 0], x[:, 1], 1.0 - x[:, 1]])


def build_interval_mesh(M: int) -> Mesh:
    """Build the uniform mesh of (0,1) with nodes at ``i/M``.

    Parameters
    ----------
    M : int
        Number of segments, at least 2.
    """
    if M < 2:
        raise ValueError(f"interval mesh needs M >= 2, got M={M}")
    nodes = (np.arange(M + 1) / M).reshape(-1, 1)
    idx = np.arange(M)
    elements = np.column_stack([idx, idx + 1])
    boundary = np.zeros(M + 1, dtype=bool)
    boundary[0] = boundary[M] = True
    return Mesh(dim=1, M=M, nodes=nodes, elements=elements, boundary_mask=boundary)


def build_square_mesh(M: int) -> Mesh:
    """Build the uniform triangulation of (0,1)^2 with 2*M^2 triangles.

    Each of the ``M^2`` lattice cells is split along its lower-left to
    upper-right diagonal, giving triangles (ll, lr, ur) and (ll, ur, ul).
    Node ``iy*(M+1) + ix`` sits at ``(ix/M, iy/M)``.
    """
    if M < 2:
        raise ValueError(f"square mesh needs M >= 2, got M={M}")
    side = np.arange(M + 1) / M
    xx, yy = np.meshgrid(side, side, indexing="xy")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    ix, iy = np.meshgrid(np.arange(M), np.arange(M), indexing="xy")
    ll = (iy * (M + 1) + ix).ravel()
    lr = ll + 1
    ul = ll + (M + 1)
    ur = ul + 1
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    elements = np.vstack([lower, upper])

    on_edge = (np.arange(M + 1) == 0) | (np.arange(M + 1) == M)
    bx, by = np.meshgrid(on_edge, on_edge, indexing="xy")
    boundary = (bx | by).ravel()
    return Mesh(dim=2, M=M, nodes=nodes, elements=elements, boundary_mask=boundary)


def _nested_index_map(fine: Mesh, coarse: Mesh) -> np.ndarray:
    """Fine-node index of every coarse node for nested lattice meshes."""
    if fine.dim != coarse.dim:
        raise ValueError("meshes have different dimensions")
    if fine.M % coarse.M != 0:
        raise ValueError(
            f"meshes are not nested: fine M={fine.M} is not a multiple of coarse M={coarse.M}"
        )
    r = fine.M // coarse.M
    if coarse.dim == 1:
        return r * np.arange(coarse.M + 1)
    ix, iy = np.meshgrid(np.arange(coarse.M + 1), np.arange(coarse.M + 1), indexing="xy")
    return ((iy * r) * (fine.M + 1) + ix * r).ravel()


def restrict_to_coarse(fine: Mesh, coarse: Mesh, values_on_fine: np.ndarray) -> np.ndarray:
    """Sample a fine nodal field at the nodes of a nested coarse mesh.

    Exact for nested meshes since every coarse node coincides with a fine
    node.  ``values_on_fine`` may carry extra leading axes (e.g. time
    levels); the nodal axis must be last.
    """
    values_on_fine = np.asarray(values_on_fine)
    if values_on_fine.shape[-1] != fine.n_nodes:
        raise ValueError(
            f"expected {fine.n_nodes} fine nodal values, got {values_on_fine.shape[-1]}"
        )
    return values_on_fine[..., _nested_index_map(fine, coarse)]


def evaluate_p1(mesh: Mesh, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate the P1 interpolant of a nodal field at arbitrary points.

    Supports the non-nested transfer path: restriction to an arbitrary
    target mesh is point evaluation at its nodes.  ``points`` has shape
    (n_points, dim); values may carry leading axes.
    """
    values = np.asarray(values, dtype=float)
    points = np.asarray(points, dtype=float)
    if values.shape[-1] != mesh.n_nodes:
        raise ValueError(f"expected {mesh.n_nodes} nodal values, got {values.shape[-1]}")
    M = mesh.M
    if mesh.dim == 1:
        x = np.clip(points[:, 0], 0.0, 1.0)
        cell = np.minimum((x * M).astype(int), M - 1)
        s = x * M - cell
        return values[..., cell] * (1.0 - s) + values[..., cell + 1] * s
    x = np.clip(points[:, 0], 0.0, 1.0)
    y = np.clip(points[:, 1], 0.0, 1.0)
    cx = np.minimum((x * M).astype(int), M - 1)
    cy = np.minimum((y * M).astype(int), M - 1)
    sx = x * M - cx
    sy = y * M - cy
    ll = cy * (M + 1) + cx
    lr = ll + 1
    ul = ll + (M + 1)
    ur = ul + 1
    # Lower triangle (ll, lr, ur) where sy <= sx; barycentric weights there
    # are (1-sx, sx-sy, sy); on the upper triangle (ll, ur, ul): (1-sy, sx, sy-sx).
    lower = sy <= sx
    out = np.where(
        lower,
        values[..., ll] * (1.0 - sx) + values[..., lr] * (sx - sy) + values[..., ur] * sy,
        values[..., ll] * (1.0 - sy) + values[..., ur] * sx + values[..., ul] * (sy - sx),
    )
    return out


def interpolate_to_mesh(src: Mesh, values_on_src: np.ndarray, dst: Mesh) -> np.ndarray:
    """Transfer a nodal field between meshes by P1 point evaluation.

    Works for arbitrary (non-nested) source/target pairs on the same
    domain and reduces to exact nodal sampling when the meshes nest.
    """
    if src.dim != dst.dim:
        raise ValueError("meshes have different dimensions")
    return evaluate_p1(src, values_on_src, dst.nodes)


def prolongation_matrix(coarse: Mesh, fine: Mesh):
    """Sparse matrix P with ``(P q_coarse)`` the coarse P1 field at fine nodes.

    Requires nested meshes.  Each coarse basis function restricted to the
    fine lattice is a combination of at most ``dim + 1`` fine nodal
    values, so P has that many entries per row.
    """
    import scipy.sparse as sp

    if fine.dim != coarse.dim or fine.M % coarse.M != 0:
        raise ValueError("prolongation needs nested meshes of equal dimension")
    M = coarse.M
    pts = fine.nodes
    if coarse.dim == 1:
        x = pts[:, 0]
        cell = np.minimum((x * M).astype(int), M - 1)
        s = x * M - cell
        rows = np.repeat(np.arange(fine.n_nodes), 2)
        cols = np.column_stack([cell, cell + 1]).ravel()
        vals = np.column_stack([1.0 - s, s]).ravel()
    else:
        x, y = pts[:, 0], pts[:, 1]
        cx = np.minimum((x * M).astype(int), M - 1)
        cy = np.minimum((y * M).astype(int), M - 1)
        sx = x * M - cx
        sy = y * M - cy
        ll = cy * (M + 1) + cx
        lr, ul = ll + 1, ll + (M + 1)
        ur = ul + 1
        lower = sy <= sx
        cols = np.where(
            lower[:, None],
            np.column_stack([ll, lr, ur]),
            np.column_stack([ll, ur, ul]),
        )
        vals = np.where(
            lower[:, None],
            np.column_stack([1.0 - sx, sx - sy, sy]),
            np.column_stack([1.0 - sy, sx, sy - sx]),
        )
        rows = np.repeat(np.arange(fine.n_nodes), 3)
        cols = cols.ravel()
        vals = vals.ravel()
    P = sp.coo_matrix((vals, (rows, cols)), shape=(fine.n_nodes, coarse.n_nodes))
    return P.tocsr()
