"""PDE assembly and solution by spectral, pointwise, and graph methods.

The spectral route splits into a kappa-independent offline stage (eigenbasis,
operator-times-basis tensors) and a cheap online stage that assembles and
solves a K x K system for each diffusion field kappa.  Pointwise (direct)
routes solve the full N x N collocation system instead.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from manifoldpde.operators import DiffOps
from manifoldpde.spectra import EigenBasis, VbdmOperator

MAX_MODES = 512
_MAGIC = b"MPDEOFT1"
_VERSION = 1


class SingularSystemError(RuntimeError):
    """Galerkin or collocation system could not be solved."""


@dataclass(frozen=True)
class OfflineTensors:
    """kappa-independent Galerkin precomputation.

    ``W`` holds the pointwise Laplacian applied to each basis column,
    ``H[l]`` the l-th gradient applied to each column, and ``A1`` the
    reaction block (1/N) Phi^T diag(c) Phi.
    """

    basis: EigenBasis
    W: np.ndarray
    H: list
    A1: np.ndarray
    c_vec: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.basis.n_modes

    def truncate(self, K: int) -> "OfflineTensors":
        """Restrict to the K leading modes without recomputation."""
        return OfflineTensors(
            basis=self.basis.truncate(K),
            W=self.W[:, :K],
            H=[h[:, :K] for h in self.H],
            A1=self.A1[:K, :K],
            c_vec=self.c_vec,
        )


@dataclass(frozen=True)
class SpectralSolution:
    """Coefficients and nodal values of a Galerkin solve."""

    coeffs: np.ndarray
    values: np.ndarray
    system: tuple
    residual: float


def galerkin_offline(basis: EigenBasis, ops: DiffOps, c: np.ndarray) -> OfflineTensors:
    """Precompute basis-contracted tensors; reusable across kappa fields."""
    c = np.asarray(c, dtype=float)
    N = basis.n_points
    if ops.n_points != N or c.shape != (N,):
        raise ValueError("basis, operators, and c must live on the same cloud")
    if basis.n_modes > MAX_MODES:
        raise ValueError(f"mode count capped at {MAX_MODES}, got {basis.n_modes}")
    Phi = basis.vectors
    W = ops.laplacian_pointwise @ Phi
    H = [G @ Phi for G in ops.gradients]
    A1 = Phi.T @ (c[:, None] * Phi) / N
    return OfflineTensors(basis=basis, W=np.asarray(W), H=[np.asarray(h) for h in H],
                          A1=A1, c_vec=c)


def galerkin_online(
    off: OfflineTensors,
    kappa: np.ndarray,
    f: np.ndarray,
    ops: DiffOps,
) -> SpectralSolution:
    """Assemble and solve the K x K Galerkin system for one kappa.

    Only matrix-vector products with the stored gradient matrices and O(NK^2)
    contractions happen here; the eigenbasis and kernel matrix are never
    touched.
    """
    kappa = np.asarray(kappa, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(kappa <= 0):
        raise ValueError("kappa must be strictly positive")
    Phi = off.basis.vectors
    N = Phi.shape[0]
    A = off.A1 + Phi.T @ (kappa[:, None] * off.W) / N
    for G, Hl in zip(ops.gradients, off.H):
        gk = G @ kappa
        A = A - Phi.T @ (gk[:, None] * Hl) / N
    b = Phi.T @ f / N
    try:
        U = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise SingularSystemError(
            f"singular Galerkin system, cond ~ {np.linalg.cond(A):.3e}"
        ) from None
    residual = float(np.linalg.norm(A @ U - b))
    return SpectralSolution(coeffs=U, values=Phi @ U, system=(A, b), residual=residual)


def _check_fields(kappa, c, f, N):
    kappa = np.asarray(kappa, float)
    c = np.asarray(c, float)
    f = np.asarray(f, float)
    if kappa.shape != (N,) or c.shape != (N,) or f.shape != (N,):
        raise ValueError(f"fields must have shape ({N},)")
    if np.any(kappa <= 0) or np.any(c <= 0):
        raise ValueError("kappa and c must be strictly positive")
    return kappa, c, f


def solve_direct_rbf(ops: DiffOps, kappa, c, f) -> np.ndarray:
    """Pointwise collocation solve of the full N x N system.

    L = -sum_l diag(G_l kappa) G_l + diag(kappa) Lap + diag(c), with Lap the
    pointwise (non-symmetric) Laplacian.
    """
    N = ops.n_points
    kappa, c, f = _check_fields(kappa, c, f, N)
    L = kappa[:, None] * np.asarray(ops.laplacian_pointwise)
    for G in ops.gradients:
        L -= (G @ kappa)[:, None] * G
    L[np.arange(N), np.arange(N)] += c
    try:
        u = np.linalg.solve(L, f)
    except np.linalg.LinAlgError:
        raise SingularSystemError(
            f"singular collocation system, cond ~ {np.linalg.cond(L):.3e}"
        ) from None
    return u


def solve_direct_rbf_fd(fd_ops: DiffOps, kappa, c, f) -> np.ndarray:
    """Sparse variant of :func:`solve_direct_rbf` on RBF-FD operators."""
    N = fd_ops.n_points
    kappa, c, f = _check_fields(kappa, c, f, N)
    L = sp.diags(kappa) @ fd_ops.laplacian_pointwise
    for G in fd_ops.gradients:
        L = L - sp.diags(G @ kappa) @ G
    L = L + sp.diags(c)
    u = spsolve(L.tocsc(), f)
    if not np.all(np.isfinite(u)):
        raise SingularSystemError("sparse collocation solve produced non-finite values")
    return u


def solve_spectral_rbf_fd(
    basis: EigenBasis, fd_ops: DiffOps, kappa, c, f
) -> SpectralSolution:
    """Galerkin pipeline with a global-SRBF basis but sparse FD operators."""
    if basis.source != "SRBF":
        raise ValueError("spectral FD solve expects a global SRBF basis")
    off = galerkin_offline(basis, fd_ops, np.asarray(c, float))
    return galerkin_online(off, kappa, f, fd_ops)


def solve_vbdm_direct(vb: VbdmOperator, kappa, c, f) -> np.ndarray:
    """Graph-Laplacian pointwise solve.

    -div(kappa grad u) is realized through the similarity identity
    sqrt(k) (Lap(sqrt(k) u) - u Lap sqrt(k)) with Lap the VBDM estimate, which
    collapses to (Lap + diag(c)) u = f when kappa is constant 1.
    """
    N = vb.n_points
    kappa, c, f = _check_fields(kappa, c, f, N)
    sk = np.sqrt(kappa)
    L = vb.matrix
    A = sp.diags(sk) @ L @ sp.diags(sk) - sp.diags(sk * (L @ sk)) + sp.diags(c)
    u = spsolve(A.tocsc(), f)
    if not np.all(np.isfinite(u)):
        raise SingularSystemError("VBDM solve produced non-finite values")
    return u


def solve_vbdm_rbf(
    basis: EigenBasis, ops: DiffOps, kappa, c, f
) -> SpectralSolution:
    """Galerkin pipeline with a VBDM eigenbasis and global RBF operators."""
    if basis.source != "VBDM":
        raise ValueError("expected a VBDM basis")
    if ops.provenance.get("kind") != "global":
        raise ValueError("VBDM-RBF uses global (dense) RBF operators")
    off = galerkin_offline(basis, ops, np.asarray(c, float))
    return galerkin_online(off, kappa, f, ops)


def save_offline_tensors(off: OfflineTensors, path) -> None:
    """Persist offline tensors: magic, version, N, K, n, then row-major float64."""
    N, K = off.basis.vectors.shape
    n = len(off.H)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIII", _VERSION, N, K, n))
        src = off.basis.source.encode()
        fh.write(struct.pack("<I", len(src)))
        fh.write(src)
        for arr in [off.basis.eigenvalues, off.basis.vectors, off.W, *off.H,
                    off.A1, off.c_vec]:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_offline_tensors(path) -> OfflineTensors:
    """Inverse of :func:`save_offline_tensors`; validates magic and version."""
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not an offline-tensor file")
        version, N, K, n = struct.unpack("<IIII", fh.read(16))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        (slen,) = struct.unpack("<I", fh.read(4))
        source = fh.read(slen).decode()

        def read(shape):
            count = int(np.prod(shape))
            return np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()

        vals = read((K,))
        vecs = read((N, K))
        W = read((N, K))
        H = [read((N, K)) for _ in range(n)]
        A1 = read((K, K))
        c_vec = read((N,))
    return OfflineTensors(
        basis=EigenBasis(vals, vecs, source), W=W, H=H, A1=A1, c_vec=c_vec
    )
