"""Data-driven Laplacian eigenbases.

Two sources: the symmetric weak-form RBF Laplacian (rank-filtered dense
eigensolve) and a variable-bandwidth graph Laplacian whose kernel bandwidth
adapts to the local sampling density.  Both expose non-negative spectra under
the -div grad sign convention, columns normalized in the empirical L2 inner
product (1/N) f^T h, with the trivial pair (0, ones) imposed explicitly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh

from manifoldpde.geometry import PointCloud, knn

DENSE_EIG_CAP = 8192


class InsufficientSpectrumError(RuntimeError):
    """Fewer eigenvalues survived filtering than were requested."""


class SpectrumError(RuntimeError):
    """Eigensolve produced values outside the admissible set."""


@dataclass(frozen=True)
class EigenBasis:
    """Leading eigenpairs, ascending, with the constant mode first.

    ``vectors`` is N x K; column 0 is the all-ones vector at eigenvalue 0 and
    every column has empirical L2 norm (1/N)||phi||^2 = 1.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    source: str

    @property
    def n_modes(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_points(self) -> int:
        return self.vectors.shape[0]

    def truncate(self, K: int) -> "EigenBasis":
        """Keep the K leading modes (constant included)."""
        if not 1 <= K <= self.n_modes:
            raise ValueError(f"K must be in [1, {self.n_modes}], got {K}")
        return EigenBasis(self.eigenvalues[:K], self.vectors[:, :K], self.source)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _with_trivial_mode(vals, vecs, N, source):
    """Renormalize to L2(mu_N), fix signs, and prepend the exact (0, ones) pair."""
    norms = np.sqrt((vecs**2).sum(axis=0) / N)
    vecs = _fix_signs(vecs / norms)
    vals = np.concatenate([[0.0], vals])
    vecs = np.column_stack([np.ones(N), vecs])
    return EigenBasis(vals, vecs, source)


def eigensolve_srbf(
    op: np.ndarray,
    K: int,
    rank_bound: int,
    tau_eig: float = 1e-4,
    allow_fewer: bool = False,
) -> EigenBasis:
    """Leading eigenbasis of the symmetric RBF Laplacian.

    Only the ``rank_bound`` largest-magnitude eigenpairs are trusted (the
    kernel matrix rank bounds the operator rank); among those, eigenvalues at
    magnitude <= tau_eig are discarded as numerically zero, the K-1 smallest
    survivors are kept, and the trivial pair is prepended.  With
    ``allow_fewer`` a spectrum shorter than requested yields a smaller basis
    instead of an error (useful when a preset K exceeds the rank at small N).
    """
    N = op.shape[0]
    rank_bound = min(rank_bound, N)
    if K < 2 or (K - 1 > rank_bound and not allow_fewer):
        raise ValueError(f"need 1 <= K-1 <= rank_bound={rank_bound}, got K={K}")
    if N <= DENSE_EIG_CAP:
        w, V = eigh(op)
        order = np.argsort(np.abs(w))[::-1][:rank_bound]
        w, V = w[order], V[:, order]
    else:
        w, V = eigsh(sp.csr_matrix(op) if sp.issparse(op) else op,
                     k=min(rank_bound, N - 2), which="LM")
    keep = np.abs(w) > tau_eig
    w, V = w[keep], V[:, keep]
    if w.size < K - 1:
        if not (allow_fewer and w.size >= 1):
            raise InsufficientSpectrumError(
                f"only {w.size} eigenvalues above tau_eig={tau_eig}, need {K - 1}"
            )
        K = w.size + 1
    order = np.argsort(w)[: K - 1]
    return _with_trivial_mode(w[order], V[:, order], N, source="SRBF")


@dataclass(frozen=True)
class TuneResult:
    epsilon: float
    max_slope: float
    fallback: bool = False


def auto_tune_epsilon(
    sq_dists: np.ndarray,
    rho_products: np.ndarray,
    n_points: int,
    denom: float = 4.0,
    exponents: np.ndarray | None = None,
) -> TuneResult:
    """Bandwidth selection by the max-slope criterion.

    Evaluates T(eps) = (1/N^2) sum_ij exp(-d_ij^2 / (denom * eps * rho_i
    rho_j)) on a log grid 2^-30..2^10 and returns the eps maximizing
    d log T / d log eps.  On a flat profile, falls back to the median squared
    distance with a warning.
    """
    if exponents is None:
        exponents = np.arange(-30.0, 10.0 + 1e-9, 0.2)
    eps_grid = 2.0**exponents
    if eps_grid.size < 3:
        raise ValueError("candidate grid must hold at least 3 points")
    ratio = np.asarray(sq_dists, float).ravel() / (denom * np.asarray(rho_products, float).ravel())
    # the diagonal (self-pair) terms contribute exp(0) = 1 each; without them
    # T would vanish as eps -> 0 and the log-slope would spike spuriously
    T = (np.array([np.exp(-ratio / e).sum() for e in eps_grid]) + n_points) / n_points**2
    logT = np.log(np.maximum(T, 1e-300))
    slopes = np.gradient(logT, np.log(eps_grid))
    best = int(np.argmax(slopes))
    if slopes[best] < 1e-2:
        warnings.warn("flat bandwidth profile; falling back to median squared distance")
        return TuneResult(float(np.median(sq_dists)), float(slopes[best]), fallback=True)
    return TuneResult(float(eps_grid[best]), float(slopes[best]), fallback=False)


@dataclass(frozen=True)
class VbdmOperator:
    """Variable-bandwidth graph-Laplacian estimate of -div grad.

    ``matrix`` is the negated generator, so its spectrum is non-negative.
    ``kernel`` and ``row_sums`` keep the symmetrizable pieces for the
    eigensolver; ``rho`` is the per-point bandwidth.
    """

    matrix: sp.csr_matrix
    kernel: sp.csr_matrix
    row_sums: np.ndarray
    epsilon: float
    rho: np.ndarray
    params: dict

    @property
    def n_points(self) -> int:
        return self.matrix.shape[0]


def vbdm_build(
    cloud: PointCloud,
    k1: int,
    k2: int,
    d: int | None = None,
    epsilon: float | None = None,
) -> VbdmOperator:
    """Construct the variable-bandwidth operator from k-nearest-neighbor data.

    Pipeline: pilot bandwidth rho_0 from the k2 nearest neighbors, kernel
    density estimate Q, bandwidth rho = Q^(-1/2), truncated variable-bandwidth
    kernel over k1 neighbors with right-normalization exponent
    alpha = -d/4 + 1/2, then L = P^-2 (D^-1 K - I) / eps, negated.
    """
    d = cloud.intrinsic_dim if d is None else d
    N = cloud.n_points
    if not 1 < k2 < k1 < N:
        raise ValueError(f"need 1 < k2 < k1 < N, got k2={k2}, k1={k1}, N={N}")
    table = knn(cloud, k1, include_self=False)
    sq = table.distances**2
    rho0 = np.sqrt(sq[:, : k2 - 1].mean(axis=1))
    if np.any(rho0 <= 0):
        raise SpectrumError("degenerate pilot bandwidth (coincident points?)")

    rows = np.repeat(np.arange(N), k1)
    cols = table.indices.ravel()

    def truncated_kernel(eps, rho, denom):
        data = np.exp(-sq.ravel() / (denom * eps * rho[rows] * rho[cols]))
        K = sp.csr_matrix((data, (rows, cols)), shape=(N, N))
        K = K.maximum(K.T)  # symmetrize the truncation pattern
        K = K + sp.identity(N, format="csr")  # self terms, exp(0) = 1
        return K

    # density estimate (universal constants omitted; the alpha-normalization
    # and the retuned epsilon absorb them)
    eps0 = auto_tune_epsilon(sq, rho0[rows] * rho0[cols], N, denom=2.0).epsilon
    K0 = truncated_kernel(eps0, rho0, denom=2.0)
    Q = np.asarray(K0.sum(axis=1)).ravel() / rho0**d
    if np.any(Q <= 0):
        raise SpectrumError("nonpositive density estimate")
    rho = Q**-0.5
    rho = rho / rho.mean()

    if epsilon is None:
        epsilon = auto_tune_epsilon(sq, rho[rows] * rho[cols], N, denom=4.0).epsilon
    K = truncated_kernel(epsilon, rho, denom=4.0)
    Q_rho = np.asarray(K.sum(axis=1)).ravel() / rho**d
    alpha = -d / 4.0 + 0.5
    scale = Q_rho**-alpha
    K_alpha = sp.diags(scale) @ K @ sp.diags(scale)
    K_alpha = K_alpha.tocsr()
    D = np.asarray(K_alpha.sum(axis=1)).ravel()
    # negated generator: -L = diag(1/(eps rho^2 D)) (D - K_alpha)
    front = 1.0 / (epsilon * rho**2 * D)
    matrix = sp.diags(front) @ (sp.diags(D) - K_alpha)
    return VbdmOperator(
        matrix=matrix.tocsr(),
        kernel=K_alpha,
        row_sums=D,
        epsilon=float(epsilon),
        rho=rho,
        params={"k1": k1, "k2": k2, "d": d, "alpha": alpha, "beta": -0.5},
    )


def eigensolve_vbdm(vb: VbdmOperator, K: int) -> EigenBasis:
    """Leading eigenbasis of the variable-bandwidth Laplacian.

    The generator is diagonally similar to a symmetric PSD matrix, so the
    solve goes through that transform (real spectrum by construction) and
    maps eigenvectors back.
    """
    N = vb.n_points
    if K >= N:
        raise ValueError(f"K must be < N = {N}")
    front = 1.0 / (vb.epsilon * vb.rho**2 * vb.row_sums)
    half = np.sqrt(front)
    sym = sp.diags(half) @ (sp.diags(vb.row_sums) - vb.kernel) @ sp.diags(half)
    sym = (sym + sym.T) * 0.5
    if N <= 4096:
        w, V = eigh(sym.toarray())
        w, V = w[:K], V[:, :K]
    else:
        w, V = eigsh(sym.tocsc(), k=K, sigma=0, which="LM")
        order = np.argsort(w)
        w, V = w[order], V[:, order]
    if np.any(w < -1e-8 * max(w.max(), 1.0)):
        raise SpectrumError(f"negative eigenvalue {w.min():g} from symmetrized solve")
    # first mode is the numerical zero; the exact trivial pair replaces it
    vecs = half[:, None] * V[:, 1:K]
    return _with_trivial_mode(w[1:K], vecs, N, source="VBDM")
