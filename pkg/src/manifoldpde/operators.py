"""Discrete surface differential operators on point clouds.

Gradient matrices apply the ambient kernel gradient projected onto the
estimated tangent space at the evaluation (row) point.  From them we form the
pointwise Laplacian  -sum_l G_l G_l  (non-symmetric, used for pointwise
solves) and the symmetric Laplacian  sum_l G_l^T G_l  (used for the
eigenbasis).  Local RBF-FD analogues assemble the same chain on k-nearest
stencils into sparse matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve
from scipy.spatial.distance import cdist

from manifoldpde.geometry import PointCloud, knn
from manifoldpde.rbf import (
    KernelSpec,
    Pinv,
    RegularizedInverse,
    kernel_matrix,
    regularized_inverse,
)
from manifoldpde.tangent import ProjectionField

DENSE_CAPACITY = 32768


class CapacityError(RuntimeError):
    """Dense-operator request beyond the supported size."""


class StencilError(RuntimeError):
    """A local RBF-FD system is singular beyond regularization."""


@dataclass
class DiffOps:
    """Gradient matrices plus derived Laplacians for one cloud.

    ``gradients[l]`` maps samples of f to samples of the l-th surface-gradient
    component.  ``laplacian_pointwise`` approximates -div grad (non-negative
    spectrum in exact arithmetic); ``laplacian_symmetric`` is its weak-form
    symmetric counterpart, present only when requested.
    """

    gradients: list
    laplacian_pointwise: object
    laplacian_symmetric: object = None
    provenance: dict = field(default_factory=dict)

    @property
    def n_points(self) -> int:
        return self.gradients[0].shape[0]

    @property
    def ambient_dim(self) -> int:
        return len(self.gradients)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.gradients[0])


def _gradient_rows(points, proj_row_l, weights):
    """B[i, j] = w(r_ij) * (a_i . x_i - a_i . x_j) with a_i the l-th projector row."""
    ax_self = np.einsum("im,im->i", proj_row_l, points)
    ax_cross = proj_row_l @ points.T
    return weights * (ax_self[:, None] - ax_cross)


def gradient_matrices(
    cloud: PointCloud,
    kernel: KernelSpec,
    inverse: RegularizedInverse,
    proj: ProjectionField,
) -> list:
    """Dense differentiation matrices G_l = B_l Phi^{-1}, one per ambient axis."""
    if not kernel.differentiable:
        raise ValueError(f"kernel family {kernel.family!r} unsupported for global gradients")
    if proj.n_points != cloud.n_points:
        raise ValueError("projection field does not cover the cloud")
    pts = cloud.points
    w = kernel.grad_factor(cdist(pts, pts))
    phi_inv = inverse.dense()
    grads = []
    for ell in range(cloud.ambient_dim):
        B = _gradient_rows(pts, proj.matrices[:, ell, :], w)
        grads.append(B @ phi_inv)
        del B
    return grads


def laplacian_nonsymmetric(gradients: list):
    """Pointwise Laplacian  -sum_l G_l G_l  (approximates -div grad)."""
    acc = None
    for G in gradients:
        term = G @ G
        acc = term if acc is None else acc + term
    return -acc


def laplacian_symmetric(gradients: list):
    """Weak-form Laplacian  sum_l G_l^T G_l, exactly symmetrized."""
    acc = None
    for G in gradients:
        term = G.T @ G
        acc = term if acc is None else acc + term
    if sp.issparse(acc):
        return (acc + acc.T) * 0.5
    return (acc + acc.T) * 0.5


def global_diff_ops(
    cloud: PointCloud,
    kernel: KernelSpec,
    proj: ProjectionField,
    method=Pinv(),
    build_pointwise: bool = True,
    build_symmetric: bool = False,
) -> DiffOps:
    """Assemble dense global operators (refuses N > 32768 rather than thrash)."""
    if cloud.n_points > DENSE_CAPACITY:
        raise CapacityError(
            f"dense operators capped at N={DENSE_CAPACITY}, got {cloud.n_points}"
        )
    inverse = regularized_inverse(kernel_matrix(cloud, kernel), method)
    grads = gradient_matrices(cloud, kernel, inverse, proj)
    lap = laplacian_nonsymmetric(grads) if build_pointwise else None
    sym = laplacian_symmetric(grads) if build_symmetric else None
    return DiffOps(
        gradients=grads,
        laplacian_pointwise=lap,
        laplacian_symmetric=sym,
        provenance={
            "kind": "global",
            "kernel": kernel,
            "inverse": method,
            "phi_rank": inverse.effective_rank,
            "phi_condition_log": inverse.condition_log,
        },
    )


def rbf_fd_weights(
    center_idx: int,
    stencil: np.ndarray,
    cloud: PointCloud,
    kernel: KernelSpec,
    proj: ProjectionField,
    ridge_sigma: float,
):
    """Laplacian and gradient weight rows for one k-nearest stencil.

    The stencil must list the center point first.  Returns ``(lap_row,
    grad_rows)`` with shapes (K,) and (n, K).  The Matern path inverts the
    local kernel matrix with a ridge shift; the phs3 path solves the bordered
    saddle system with linear moment constraints.
    """
    stencil = np.asarray(stencil)
    if stencil[0] != center_idx:
        raise ValueError("stencil must start with the center point")
    pts = cloud.points[stencil]
    K, n = pts.shape
    if kernel.family == "phs3" and K <= n + 1:
        raise StencilError(f"phs3 stencil needs K > n+1 = {n + 1}, got {K}")
    r = cdist(pts, pts)
    w = kernel.grad_factor(r)
    proj_rows = proj.matrices[stencil]  # (K, n, n)
    try:
        if kernel.family == "phs3":
            A = kernel_matrix(pts, kernel)
            grads = []
            for ell in range(n):
                a = proj_rows[:, ell, :]
                B = _gradient_rows(pts, a, w)
                # gradient of the polynomial tail [1, x] projected on row a
                Bbig = np.hstack([B, np.zeros((K, 1)), a])
                grads.append(solve(A, Bbig.T, assume_a="sym").T[:, :K])
        else:
            A = kernel.value(r) + ridge_sigma * np.eye(K)
            grads = []
            for ell in range(n):
                B = _gradient_rows(pts, proj_rows[:, ell, :], w)
                grads.append(solve(A, B.T, assume_a="sym").T)
    except np.linalg.LinAlgError as exc:
        raise StencilError(f"singular local system at point {center_idx}: {exc}") from None
    lap = None
    for G in grads:
        term = G @ G
        lap = term if lap is None else lap + term
    lap_row = -lap[0]
    grad_rows = np.stack([G[0] for G in grads])
    return lap_row, grad_rows


def rbf_fd_operator(
    cloud: PointCloud,
    kernel: KernelSpec,
    K_stencil: int,
    proj: ProjectionField,
    ridge_sigma: float | None = None,
) -> DiffOps:
    """Sparse operators with exactly K_stencil entries per row."""
    N = cloud.n_points
    if ridge_sigma is None:
        ridge_sigma = 1e-6 / N
    table = knn(cloud, K_stencil, include_self=True)
    lap_data = np.empty((N, K_stencil))
    grad_data = np.empty((cloud.ambient_dim, N, K_stencil))
    for i in range(N):
        lap_row, grad_rows = rbf_fd_weights(i, table.indices[i], cloud, kernel, proj, ridge_sigma)
        lap_data[i] = lap_row
        grad_data[:, i, :] = grad_rows
    indptr = np.arange(0, N * K_stencil + 1, K_stencil)
    cols = table.indices.ravel()

    def as_csr(data):
        return sp.csr_matrix((data.ravel(), cols, indptr), shape=(N, N))

    grads = [as_csr(grad_data[ell]) for ell in range(cloud.ambient_dim)]
    return DiffOps(
        gradients=grads,
        laplacian_pointwise=as_csr(lap_data),
        laplacian_symmetric=None,
        provenance={
            "kind": "fd",
            "kernel": kernel,
            "stencil": K_stencil,
            "ridge_sigma": ridge_sigma,
        },
    )


def dump_operator(matrix, path, kind: str = "operator") -> None:
    """Debug dump: text header (rows, cols, kind) then row-major entries."""
    dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
    with open(path, "w") as fh:
        fh.write(f"# {dense.shape[0]} {dense.shape[1]} {kind}\n")
        for row in dense:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
