"""Radial kernels, interpolation matrices, and regularized inversion.

Global interpolation matrices on randomly sampled clouds are severely
ill-conditioned, so inversion goes through either a truncated spectral
pseudo-inverse (default for global kernels) or a ridge shift (default for
local RBF-FD stencils).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh, lu_factor, lu_solve
from scipy.spatial.distance import cdist

FAMILIES = ("iq", "matern", "phs3")


@dataclass(frozen=True)
class KernelSpec:
    """A radial kernel family plus shape parameter.

    ``iq``:      phi_s(r) = 1 / (1 + (s r)^2)
    ``matern``:  phi_s(r) = (1 + s r) exp(-s r)
    ``phs3``:    phi(r)   = r^3, augmented with a linear polynomial tail and
                 moment constraints (shape parameter unused)
    """

    family: str
    shape: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family != "phs3" and self.shape <= 0:
            raise ValueError("shape parameter must be positive")

    @property
    def differentiable(self) -> bool:
        """Whether the ambient gradient exists at r = 0 (needed for global
        differentiation matrices)."""
        return self.family in ("iq", "matern")

    def value(self, r: np.ndarray) -> np.ndarray:
        s = self.shape
        if self.family == "iq":
            return 1.0 / (1.0 + (s * r) ** 2)
        if self.family == "matern":
            return (1.0 + s * r) * np.exp(-s * r)
        return r**3

    def grad_factor(self, r: np.ndarray) -> np.ndarray:
        """w(r) with grad phi(x - y) = w(||x - y||) (x - y)."""
        s = self.shape
        if self.family == "iq":
            return -2.0 * s**2 / (1.0 + (s * r) ** 2) ** 2
        if self.family == "matern":
            return -(s**2) * np.exp(-s * r)
        return 3.0 * r


def poly_tail(points: np.ndarray) -> np.ndarray:
    """Constant-plus-linear polynomial block [1, x^1, ..., x^n], (N, n+1)."""
    return np.column_stack([np.ones(points.shape[0]), points])


def kernel_matrix(cloud_or_points, kernel: KernelSpec) -> np.ndarray:
    """Symmetric interpolation matrix on the cloud.

    For ``phs3`` the bordered saddle system [[Phi, Pi], [Pi^T, 0]] enforcing
    the polynomial moment constraints is returned instead of Phi alone.
    """
    pts = getattr(cloud_or_points, "points", cloud_or_points)
    r = cdist(pts, pts)
    Phi = kernel.value(r)
    if kernel.family != "phs3":
        return Phi
    Pi = poly_tail(pts)
    m = Pi.shape[1]
    top = np.hstack([Phi, Pi])
    bottom = np.hstack([Pi.T, np.zeros((m, m))])
    return np.vstack([top, bottom])


@dataclass(frozen=True)
class Pinv:
    """Spectral pseudo-inverse: components at magnitude <= tau are dropped."""

    tau: float = 1e-6


@dataclass(frozen=True)
class Ridge:
    """Exact solve of (Phi + sigma I)."""

    sigma: float


class RegularizedInverse:
    """An applicable inverse of a symmetric kernel matrix.

    Use :func:`regularized_inverse` to construct.  ``effective_rank`` is the
    number of retained spectral components (pseudo-inverse only) and
    ``condition_log`` records log(sigma_max / sigma_min_retained) as a
    conditioning diagnostic.
    """

    def __init__(self, matrix: np.ndarray, method):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("expected a square matrix")
        self.method = method
        self.shape = matrix.shape
        if isinstance(method, Pinv):
            # symmetric input: eigendecomposition gives the SVD up to signs
            w, V = eigh(matrix)
            keep = np.abs(w) > method.tau
            self.effective_rank = int(np.count_nonzero(keep))
            if self.effective_rank == 0:
                raise ValueError("pseudo-inverse retained no components")
            self._w = w[keep]
            self._V = np.ascontiguousarray(V[:, keep])
            mags = np.abs(self._w)
            self.condition_log = float(np.log(mags.max() / mags.min()))
            self._solver = None
        elif isinstance(method, Ridge):
            if method.sigma <= 0:
                raise ValueError("ridge parameter must be positive")
            shifted = matrix + method.sigma * np.eye(matrix.shape[0])
            try:
                self._solver = ("cho", cho_factor(shifted))
            except np.linalg.LinAlgError:
                self._solver = ("lu", lu_factor(shifted))
            self.effective_rank = None
            self.condition_log = None
        else:
            raise TypeError(f"unknown inversion method {method!r}")

    def apply(self, rhs: np.ndarray) -> np.ndarray:
        """Solve matrix @ x = rhs for one vector or a stack of columns."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.shape[0]:
            raise ValueError(f"rhs has leading dim {rhs.shape[0]}, expected {self.shape[0]}")
        if isinstance(self.method, Pinv):
            proj = self._V.T @ rhs
            if proj.ndim == 1:
                return self._V @ (proj / self._w)
            return self._V @ (proj / self._w[:, None])
        kind, fac = self._solver
        return cho_solve(fac, rhs) if kind == "cho" else lu_solve(fac, rhs)

    def dense(self) -> np.ndarray:
        """Materialize the (pseudo-)inverse as a dense matrix."""
        if isinstance(self.method, Pinv):
            return (self._V / self._w) @ self._V.T
        return self.apply(np.eye(self.shape[0]))


def regularized_inverse(matrix: np.ndarray, method=Pinv()) -> RegularizedInverse:
    """Build a :class:`RegularizedInverse` for a symmetric kernel matrix."""
    return RegularizedInverse(matrix, method)


def rbf_interpolant_eval(
    train_cloud,
    kernel: KernelSpec,
    inverse: RegularizedInverse,
    values: np.ndarray,
    query_points: np.ndarray,
) -> np.ndarray:
    """Evaluate the RBF interpolant of ``values`` at arbitrary query points.

    ``values`` may be a vector (N,) or a matrix (N, K) of columns to transfer
    jointly, e.g. an eigenvector basis moved onto a fresh cloud.
    """
    pts = getattr(train_cloud, "points", train_cloud)
    query = np.atleast_2d(np.asarray(query_points, dtype=float))
    values = np.asarray(values, dtype=float)
    N = pts.shape[0]
    if values.shape[0] != N:
        raise ValueError(f"values has leading dim {values.shape[0]}, expected {N}")
    if kernel.family == "phs3":
        m = pts.shape[1] + 1
        pad_shape = (m,) if values.ndim == 1 else (m, values.shape[1])
        rhs = np.concatenate([values, np.zeros(pad_shape)], axis=0)
        coeffs = inverse.apply(rhs)
        cross = np.hstack([kernel.value(cdist(query, pts)), poly_tail(query)])
        return cross @ coeffs
    coeffs = inverse.apply(values)
    return kernel.value(cdist(query, pts)) @ coeffs
