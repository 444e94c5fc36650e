"""Kernel, interpolation-matrix, and regularized-inverse tests."""

import numpy as np
import pytest

from manifoldpde import geometry
from manifoldpde.rbf import (
    KernelSpec,
    Pinv,
    RegularizedInverse,
    Ridge,
    kernel_matrix,
    poly_tail,
    rbf_interpolant_eval,
    regularized_inverse,
)


# ---------------------------------------------------------------------------
# Kernel formulas
# ---------------------------------------------------------------------------

def test_kernel_values_closed_form():
    r = np.array([0.0, 0.5, 2.0])
    iq = KernelSpec("iq", 2.0)
    assert np.allclose(iq.value(r), 1.0 / (1.0 + (2.0 * r) ** 2))
    mat = KernelSpec("matern", 1.5)
    assert np.allclose(mat.value(r), (1.0 + 1.5 * r) * np.exp(-1.5 * r))
    phs = KernelSpec("phs3")
    assert np.allclose(phs.value(r), r**3)


def test_kernel_limits():
    mat = KernelSpec("matern", 2.5)
    assert mat.value(np.array([0.0]))[0] == 1.0
    vals = mat.value(np.linspace(0, 50, 200))
    assert np.all(np.diff(vals) <= 0)  # monotone decay
    assert vals[-1] < 1e-10
    iq = KernelSpec("iq", 1.0)
    assert iq.value(np.array([0.0]))[0] == 1.0


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("gaussian")
    with pytest.raises(ValueError):
        KernelSpec("iq", -1.0)
    assert KernelSpec("phs3").differentiable is False
    assert KernelSpec("iq").differentiable is True


def test_grad_factor_matches_finite_difference_gradient():
    # grad phi(x - y) = w(||x - y||) (x - y); check each family by central FD
    rng = np.random.default_rng(0)
    x = rng.standard_normal(3)
    y = rng.standard_normal(3)
    h = 1e-6
    for kernel in (KernelSpec("iq", 1.3), KernelSpec("matern", 2.0), KernelSpec("phs3")):
        grad_fd = np.empty(3)
        for ell in range(3):
            e = np.zeros(3)
            e[ell] = h
            rp = np.linalg.norm(x + e - y)
            rm = np.linalg.norm(x - e - y)
            grad_fd[ell] = (kernel.value(np.array([rp]))[0]
                            - kernel.value(np.array([rm]))[0]) / (2 * h)
        r = np.linalg.norm(x - y)
        grad = kernel.grad_factor(np.array([r]))[0] * (x - y)
        assert np.max(np.abs(grad - grad_fd)) < 1e-6


# ---------------------------------------------------------------------------
# Interpolation matrices
# ---------------------------------------------------------------------------

def test_kernel_matrix_matches_naive_double_loop():
    sample = geometry.sample_torus(80, seed=1)
    pts = sample.cloud.points
    for kernel in (KernelSpec("iq", 1.2), KernelSpec("matern", 2.5)):
        Phi = kernel_matrix(sample.cloud, kernel)
        naive = np.empty((80, 80))
        for i in range(80):
            for j in range(80):
                naive[i, j] = kernel.value(np.array([np.linalg.norm(pts[i] - pts[j])]))[0]
        assert np.max(np.abs(Phi - naive)) < 1e-15
        assert np.max(np.abs(Phi - Phi.T)) == 0.0
        assert np.allclose(np.diag(Phi), 1.0)


def test_phs3_matrix_is_bordered_saddle_system():
    sample = geometry.sample_ellipse(30, seed=2)
    A = kernel_matrix(sample.cloud, KernelSpec("phs3"))
    N, n = 30, 2
    assert A.shape == (N + n + 1, N + n + 1)
    assert np.max(np.abs(A - A.T)) == 0.0
    assert np.max(np.abs(A[N:, N:])) == 0.0  # zero block
    assert np.array_equal(A[:N, N:], poly_tail(sample.cloud.points))


# ---------------------------------------------------------------------------
# Regularized inversion
# ---------------------------------------------------------------------------

def test_pinv_equals_true_inverse_when_well_conditioned():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((20, 20))
    A = M @ M.T + 5.0 * np.eye(20)
    inv = regularized_inverse(A, Pinv(tau=1e-6))
    assert inv.effective_rank == 20
    assert np.max(np.abs(inv.dense() - np.linalg.inv(A))) < 1e-10
    rhs = rng.standard_normal(20)
    assert np.max(np.abs(A @ inv.apply(rhs) - rhs)) < 1e-10


def test_pinv_drops_small_spectral_components():
    V = np.linalg.qr(np.random.default_rng(4).standard_normal((6, 6)))[0]
    w = np.array([10.0, 5.0, 1.0, 1e-9, 1e-10, 1e-12])
    A = (V * w) @ V.T
    inv = regularized_inverse(A, Pinv(tau=1e-6))
    assert inv.effective_rank == 3
    # the pseudo-inverse only inverts the retained subspace
    expected = (V[:, :3] / w[:3]) @ V[:, :3].T
    assert np.max(np.abs(inv.dense() - expected)) < 1e-10


def test_pinv_all_dropped_raises():
    with pytest.raises(ValueError, match="no components"):
        regularized_inverse(1e-9 * np.eye(4), Pinv(tau=1e-6))


def test_ridge_solves_shifted_system():
    rng = np.random.default_rng(5)
    M = rng.standard_normal((15, 15))
    A = M @ M.T
    sigma = 1e-3
    inv = regularized_inverse(A, Ridge(sigma))
    rhs = rng.standard_normal(15)
    x = inv.apply(rhs)
    assert np.max(np.abs((A + sigma * np.eye(15)) @ x - rhs)) < 1e-9


def test_ridge_rejects_nonpositive_sigma():
    with pytest.raises(ValueError):
        regularized_inverse(np.eye(3), Ridge(0.0))


def test_inverse_shape_validation():
    with pytest.raises(ValueError):
        RegularizedInverse(np.zeros((3, 4)), Pinv())
    inv = regularized_inverse(np.eye(3), Pinv())
    with pytest.raises(ValueError, match="leading dim"):
        inv.apply(np.zeros(4))


# ---------------------------------------------------------------------------
# Interpolant evaluation
# ---------------------------------------------------------------------------

def test_interpolant_reproduces_training_values():
    sample = geometry.sample_ellipse(60, seed=6)
    kernel = KernelSpec("matern", 3.0)
    inverse = regularized_inverse(kernel_matrix(sample.cloud, kernel), Ridge(1e-12))
    vals = np.sin(3 * sample.params[:, 0])
    at_train = rbf_interpolant_eval(sample.cloud, kernel, inverse, vals,
                                    sample.cloud.points)
    assert np.max(np.abs(at_train - vals)) < 1e-6


def test_phs3_interpolant_reproduces_constants_exactly():
    # moment constraints force exact polynomial reproduction at any query
    sample = geometry.sample_ellipse(40, seed=7)
    kernel = KernelSpec("phs3")
    inverse = regularized_inverse(kernel_matrix(sample.cloud, kernel), Pinv(1e-10))
    vals = np.full(40, 2.5)
    rng = np.random.default_rng(8)
    queries = rng.uniform(-2, 2, size=(25, 2))
    out = rbf_interpolant_eval(sample.cloud, kernel, inverse, vals, queries)
    assert np.max(np.abs(out - 2.5)) < 1e-8


def test_interpolant_transfers_matrix_columns():
    sample = geometry.sample_ellipse(80, seed=9)
    kernel = KernelSpec("iq", 1.0)
    inverse = regularized_inverse(kernel_matrix(sample.cloud, kernel), Pinv(1e-6))
    theta = sample.params[:, 0]
    cols = np.column_stack([np.cos(theta), np.sin(theta)])
    target = geometry.sample_ellipse(80, seed=10)
    out = rbf_interpolant_eval(sample.cloud, kernel, inverse, cols,
                               target.cloud.points)
    t2 = target.params[:, 0]
    expected = np.column_stack([np.cos(t2), np.sin(t2)])
    assert out.shape == (80, 2)
    assert np.max(np.abs(out - expected)) < 5e-2


def test_interpolant_rejects_wrong_length():
    sample = geometry.sample_ellipse(30, seed=1)
    kernel = KernelSpec("iq", 1.0)
    inverse = regularized_inverse(kernel_matrix(sample.cloud, kernel), Pinv(1e-6))
    with pytest.raises(ValueError, match="leading dim"):
        rbf_interpolant_eval(sample.cloud, kernel, inverse, np.zeros(29),
                             sample.cloud.points)
