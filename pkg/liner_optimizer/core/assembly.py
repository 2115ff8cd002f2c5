from typing import Callable, Optional

import numpy as np
from scipy import sparse

from liner_optimizer.constants import FAR_FIELD_TAG, LINER_TAG, SOURCE_TAG
from liner_optimizer.core.mesh import check_mesh, signed_areas
from liner_optimizer.models import FomOperators, Mesh

SourceProfile = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Reference P1 mass matrix, scaled by area/12 per element
_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0

# 2-point Gauss rule on [0, 1], exact for the quadratic integrand phi_a * phi_b
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(2)
_GAUSS_X = 0.5 * (_GAUSS_X + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W


def default_source_profile(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Fan source on x=0: 1 + y cos(10 pi y)."""
    return 1.0 + y * np.cos(10.0 * np.pi * y)


def _to_symmetric_csr(rows, cols, values, n: int) -> sparse.csr_matrix:
    A = sparse.coo_matrix((values, (rows, cols)), shape=(n, n)).tocsr()
    A = 0.5 * (A + A.T)
    A.sum_duplicates()
    A.sort_indices()
    return A.tocsr()


def mass_matrix(mesh: Mesh) -> sparse.csr_matrix:
    el = mesh.elements
    areas = signed_areas(mesh.nodes, el)
    local = areas[:, None, None] * _LOCAL_MASS[None, :, :]
    rows = np.repeat(el, 3, axis=1).ravel()
    cols = np.tile(el, (1, 3)).ravel()
    return _to_symmetric_csr(rows, cols, local.ravel(), mesh.n_nodes)


def stiffness_matrix(mesh: Mesh) -> sparse.csr_matrix:
    el = mesh.elements
    p = mesh.nodes[el]
    areas = signed_areas(mesh.nodes, el)
    # Barycentric gradients: grad phi_i = (y_j - y_k, x_k - x_j) / (2 area)
    b = np.stack(
        [p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1], p[:, 0, 1] - p[:, 1, 1]], axis=1
    )
    c = np.stack(
        [p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0], p[:, 1, 0] - p[:, 0, 0]], axis=1
    )
    local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (
        4.0 * areas[:, None, None]
    )
    rows = np.repeat(el, 3, axis=1).ravel()
    cols = np.tile(el, (1, 3)).ravel()
    return _to_symmetric_csr(rows, cols, local.ravel(), mesh.n_nodes)


def boundary_mass_matrix(mesh: Mesh, tag: int) -> sparse.csr_matrix:
    """Edge mass matrix on the boundary segment carrying `tag`."""
    edges = mesh.edges_with_tag(tag)
    n = mesh.n_nodes
    if len(edges) == 0:
        return sparse.csr_matrix((n, n))
    lengths = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1)
    shape = np.stack([1.0 - _GAUSS_X, _GAUSS_X], axis=1)
    local_ref = np.einsum("q,qa,qb->ab", _GAUSS_W, shape, shape)
    local = lengths[:, None, None] * local_ref[None, :, :]
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    return _to_symmetric_csr(rows, cols, local.ravel(), n)


def assemble_operators(
    mesh: Mesh, source_profile: Optional[SourceProfile] = None
) -> FomOperators:
    """
    Parameter-independent P1 matrices of the duct problem.

    The Dirichlet set holds every node of the source segment, corners included.
    g_gamma1 is the nodal interpolant of the source profile on those nodes and
    zero elsewhere.
    """
    check_mesh(mesh)
    profile = source_profile or default_source_profile

    dirichlet_idx = mesh.nodes_with_tag(SOURCE_TAG)
    g = np.zeros(mesh.n_nodes)
    if dirichlet_idx.size:
        xs, ys = mesh.nodes[dirichlet_idx, 0], mesh.nodes[dirichlet_idx, 1]
        g[dirichlet_idx] = np.broadcast_to(
            np.asarray(profile(xs, ys), dtype=float), dirichlet_idx.shape
        )

    return FomOperators(
        M0=mass_matrix(mesh),
        S0=stiffness_matrix(mesh),
        K2_0=boundary_mass_matrix(mesh, LINER_TAG),
        K4_0=boundary_mass_matrix(mesh, FAR_FIELD_TAG),
        dirichlet_idx=dirichlet_idx,
        g_gamma1=g,
    )
