"""Solver tests: Galerkin assembly vs a brute-force triple loop, direct and
graph solves, offline/online reuse, and tensor persistence."""

import math

import numpy as np
import pytest

from manifoldpde import geometry, operators, rbf, solvers, spectra, tangent
from manifoldpde.geometry import knn
from manifoldpde.solvers import (
    OfflineTensors,
    galerkin_offline,
    galerkin_online,
    load_offline_tensors,
    save_offline_tensors,
    solve_direct_rbf,
    solve_direct_rbf_fd,
    solve_spectral_rbf_fd,
    solve_vbdm_direct,
    solve_vbdm_rbf,
)


def _setup(N, seed=0, K=5, shape_eig=1.0, shape_op=1.2):
    sample = geometry.sample_ellipse(N, seed=seed)
    cloud = sample.cloud
    proj = tangent.estimate_tangent_second_order(
        cloud, knn(cloud, math.ceil(math.sqrt(N))))
    ops = operators.global_diff_ops(cloud, rbf.KernelSpec("iq", shape_op), proj)
    kernel = rbf.KernelSpec("iq", shape_eig)
    inverse = rbf.regularized_inverse(rbf.kernel_matrix(cloud, kernel),
                                      rbf.Pinv(1e-6))
    grads = operators.gradient_matrices(cloud, kernel, inverse, proj)
    sym = operators.laplacian_symmetric(grads)
    basis = spectra.eigensolve_srbf(sym, K=K, rank_bound=inverse.effective_rank)
    return sample, ops, basis, proj


# ---------------------------------------------------------------------------
# Galerkin assembly vs an explicit triple loop
# ---------------------------------------------------------------------------

def test_galerkin_system_matches_triple_loop():
    sample, ops, basis, _ = _setup(50, seed=1, K=5)
    off = galerkin_offline(basis, ops, sample.c_field)
    sol = galerkin_online(off, sample.kappa, sample.forcing_f, ops)
    A_fast, b_fast = sol.system

    N, K = 50, basis.n_modes
    Phi = basis.vectors
    lap = np.asarray(ops.laplacian_pointwise)
    lap_phi = [lap @ Phi[:, k] for k in range(K)]
    grad_kappa = [G @ sample.kappa for G in ops.gradients]
    grad_phi = [[G @ Phi[:, k] for k in range(K)] for G in ops.gradients]

    A_slow = np.zeros((K, K))
    b_slow = np.zeros(K)
    for j in range(K):
        for k in range(K):
            acc = 0.0
            for i in range(N):
                term = sample.c_field[i] * Phi[i, k]
                term += sample.kappa[i] * lap_phi[k][i]
                for ell in range(len(ops.gradients)):
                    term -= grad_kappa[ell][i] * grad_phi[ell][k][i]
                acc += term * Phi[i, j]
            A_slow[j, k] = acc / N
        b_slow[j] = sum(Phi[i, j] * sample.forcing_f[i] for i in range(N)) / N

    scale = np.abs(A_slow).max()
    assert np.max(np.abs(A_fast - A_slow)) < 1e-12 * scale
    assert np.max(np.abs(b_fast - b_slow)) < 1e-12 * max(np.abs(b_slow).max(), 1.0)


def test_online_solution_solves_its_own_system():
    sample, ops, basis, _ = _setup(80, seed=2, K=6)
    off = galerkin_offline(basis, ops, sample.c_field)
    sol = galerkin_online(off, sample.kappa, sample.forcing_f, ops)
    A, b = sol.system
    assert np.max(np.abs(A @ sol.coeffs - b)) < 1e-10
    assert sol.residual < 1e-10
    assert np.allclose(sol.values, basis.vectors @ sol.coeffs)


def test_offline_truncate_slices_all_tensors():
    sample, ops, basis, _ = _setup(60, seed=3, K=8)
    off = galerkin_offline(basis, ops, sample.c_field)
    cut = off.truncate(4)
    assert cut.n_modes == 4
    assert np.array_equal(cut.W, off.W[:, :4])
    assert np.array_equal(cut.A1, off.A1[:4, :4])
    for full, sliced in zip(off.H, cut.H):
        assert np.array_equal(sliced, full[:, :4])


def test_truncated_online_equals_direct_small_basis():
    # solving with a K-mode offline build must equal slicing a larger one
    sample, ops, basis, _ = _setup(60, seed=4, K=8)
    off_big = galerkin_offline(basis, ops, sample.c_field)
    off_small = galerkin_offline(basis.truncate(5), ops, sample.c_field)
    u_sliced = galerkin_online(off_big.truncate(5), sample.kappa,
                               sample.forcing_f, ops).values
    u_direct = galerkin_online(off_small, sample.kappa,
                               sample.forcing_f, ops).values
    assert np.max(np.abs(u_sliced - u_direct)) < 1e-12


def test_online_rejects_nonpositive_kappa():
    sample, ops, basis, _ = _setup(50, seed=5, K=4)
    off = galerkin_offline(basis, ops, sample.c_field)
    with pytest.raises(ValueError, match="positive"):
        galerkin_online(off, -sample.kappa, sample.forcing_f, ops)


def test_offline_validates_shapes():
    sample, ops, basis, _ = _setup(50, seed=6, K=4)
    with pytest.raises(ValueError, match="same cloud"):
        galerkin_offline(basis, ops, np.ones(49))


# ---------------------------------------------------------------------------
# Direct and cross-method agreement
# ---------------------------------------------------------------------------

def test_direct_rbf_solves_ellipse_accurately():
    sample, ops, _, _ = _setup(400, seed=7, K=4)
    u = solve_direct_rbf(ops, sample.kappa, sample.c_field, sample.forcing_f)
    assert np.max(np.abs(u - sample.truth_u)) < 5e-2


def test_spectral_full_rank_tracks_direct():
    # with every surviving mode retained, the Galerkin solve reproduces the
    # direct collocation solution closely
    sample, ops, basis, _ = _setup(200, seed=8, K=2)
    # rebuild with the full surviving spectrum
    cloud = sample.cloud
    proj = tangent.estimate_tangent_second_order(cloud, knn(cloud, 15))
    kernel = rbf.KernelSpec("iq", 1.0)
    inverse = rbf.regularized_inverse(rbf.kernel_matrix(cloud, kernel),
                                      rbf.Pinv(1e-6))
    grads = operators.gradient_matrices(cloud, kernel, inverse, proj)
    sym = operators.laplacian_symmetric(grads)
    basis = spectra.eigensolve_srbf(sym, K=inverse.effective_rank + 1,
                                    rank_bound=inverse.effective_rank,
                                    allow_fewer=True)
    off = galerkin_offline(basis, ops, sample.c_field)
    u_spec = galerkin_online(off, sample.kappa, sample.forcing_f, ops).values
    u_dir = solve_direct_rbf(ops, sample.kappa, sample.c_field, sample.forcing_f)
    err_dir = np.max(np.abs(u_dir - sample.truth_u))
    assert np.max(np.abs(u_spec - sample.truth_u)) < 10 * max(err_dir, 1e-3)


def test_direct_fd_tracks_direct_global():
    sample, ops, _, proj = _setup(200, seed=9, K=4)
    fd = operators.rbf_fd_operator(sample.cloud, rbf.KernelSpec("matern", 2.5),
                                   29, proj)
    u_fd = solve_direct_rbf_fd(fd, sample.kappa, sample.c_field, sample.forcing_f)
    u_g = solve_direct_rbf(ops, sample.kappa, sample.c_field, sample.forcing_f)
    err_g = np.max(np.abs(u_g - sample.truth_u))
    assert np.max(np.abs(u_fd - sample.truth_u)) < 10 * max(err_g, 5e-2)


def test_spectral_fd_requires_srbf_basis():
    sample, ops, basis, proj = _setup(100, seed=10, K=4)
    fd = operators.rbf_fd_operator(sample.cloud, rbf.KernelSpec("matern", 2.5),
                                   21, proj)
    sol = solve_spectral_rbf_fd(basis, fd, sample.kappa, sample.c_field,
                                sample.forcing_f)
    assert sol.values.shape == (100,)
    fake = spectra.EigenBasis(basis.eigenvalues, basis.vectors, "VBDM")
    with pytest.raises(ValueError, match="SRBF"):
        solve_spectral_rbf_fd(fake, fd, sample.kappa, sample.c_field,
                              sample.forcing_f)


def test_field_validation_rejects_bad_shapes_and_signs():
    sample, ops, _, _ = _setup(50, seed=11, K=4)
    with pytest.raises(ValueError):
        solve_direct_rbf(ops, sample.kappa[:-1], sample.c_field, sample.forcing_f)
    with pytest.raises(ValueError):
        solve_direct_rbf(ops, sample.kappa, 0.0 * sample.c_field, sample.forcing_f)


# ---------------------------------------------------------------------------
# VBDM solves
# ---------------------------------------------------------------------------

def test_vbdm_direct_collapses_when_kappa_is_one():
    # with kappa = 1 the assembled system must be exactly L + diag(c)
    sample = geometry.sample_ellipse(300, seed=12)
    vb = spectra.vbdm_build(sample.cloud, k1=20, k2=10)
    f = sample.forcing_f
    ones = np.ones(300)
    u_identity = solve_vbdm_direct(vb, ones, sample.c_field, f)
    import scipy.sparse as sp
    from scipy.sparse.linalg import spsolve

    A = vb.matrix + sp.diags(sample.c_field)
    u_plain = spsolve(A.tocsc(), f)
    assert np.max(np.abs(u_identity - u_plain)) < 1e-10


def test_vbdm_direct_solves_ellipse_roughly():
    sample = geometry.sample_ellipse(800, seed=13)
    vb = spectra.vbdm_build(sample.cloud, k1=30, k2=15)
    u = solve_vbdm_direct(vb, sample.kappa, sample.c_field, sample.forcing_f)
    assert np.max(np.abs(u - sample.truth_u)) < 0.5


def test_vbdm_rbf_requires_matching_inputs():
    sample, ops, basis, proj = _setup(150, seed=14, K=5)
    vb = spectra.vbdm_build(sample.cloud, k1=18, k2=9)
    vb_basis = spectra.eigensolve_vbdm(vb, K=5)
    sol = solve_vbdm_rbf(vb_basis, ops, sample.kappa, sample.c_field,
                         sample.forcing_f)
    assert sol.values.shape == (150,)
    with pytest.raises(ValueError, match="VBDM"):
        solve_vbdm_rbf(basis, ops, sample.kappa, sample.c_field, sample.forcing_f)
    fd = operators.rbf_fd_operator(sample.cloud, rbf.KernelSpec("matern", 2.5),
                                   21, proj)
    with pytest.raises(ValueError, match="global"):
        solve_vbdm_rbf(vb_basis, fd, sample.kappa, sample.c_field,
                       sample.forcing_f)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def test_offline_tensors_round_trip(tmp_path):
    sample, ops, basis, _ = _setup(60, seed=15, K=6)
    off = galerkin_offline(basis, ops, sample.c_field)
    path = tmp_path / "tensors.bin"
    save_offline_tensors(off, path)
    loaded = load_offline_tensors(path)
    assert np.array_equal(loaded.basis.vectors, off.basis.vectors)
    assert np.array_equal(loaded.basis.eigenvalues, off.basis.eigenvalues)
    assert loaded.basis.source == "SRBF"
    assert np.array_equal(loaded.W, off.W)
    assert np.array_equal(loaded.A1, off.A1)
    for a, b in zip(loaded.H, off.H):
        assert np.array_equal(a, b)
    # the reloaded tensors drive the online stage to the same answer
    u1 = galerkin_online(off, sample.kappa, sample.forcing_f, ops).values
    u2 = galerkin_online(loaded, sample.kappa, sample.forcing_f, ops).values
    # reloaded buffers can take different BLAS paths; agreement to 1e-12
    assert np.max(np.abs(u1 - u2)) < 1e-12


def test_load_rejects_foreign_files(tmp_path):
    path = tmp_path / "bogus.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
    with pytest.raises(ValueError, match="not an offline-tensor"):
        load_offline_tensors(path)


def test_mode_cap_enforced():
    sample, ops, basis, _ = _setup(50, seed=16, K=4)
    big = spectra.EigenBasis(np.zeros(solvers.MAX_MODES + 1),
                             np.ones((50, solvers.MAX_MODES + 1)), "SRBF")
    with pytest.raises(ValueError, match="capped"):
        galerkin_offline(big, ops, sample.c_field)
