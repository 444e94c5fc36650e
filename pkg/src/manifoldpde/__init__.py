"""Mesh-free solvers for elliptic PDEs on manifolds known only through point clouds.

The library approximates surface differential operators from scattered samples
with radial-basis-function (RBF) interpolation, builds a data-driven eigenbasis
of a weighted Laplacian, and solves

    -div_g(kappa grad_g u) + c u = f

by a Galerkin spectral method, alongside direct (pointwise) RBF, local RBF-FD,
and variable-bandwidth graph-Laplacian baselines.
"""

from manifoldpde.geometry import (
    ManifoldSample,
    NeighborTable,
    PointCloud,
    knn,
    load_point_cloud,
    sample_ellipse,
    sample_torus,
    save_point_cloud,
)
from manifoldpde.tangent import (
    ProjectionField,
    estimate_tangent_first_order,
    estimate_tangent_second_order,
)
from manifoldpde.rbf import (
    KernelSpec,
    Pinv,
    RegularizedInverse,
    Ridge,
    kernel_matrix,
    rbf_interpolant_eval,
    regularized_inverse,
)
from manifoldpde.operators import (
    DiffOps,
    global_diff_ops,
    gradient_matrices,
    laplacian_nonsymmetric,
    laplacian_symmetric,
    rbf_fd_operator,
    rbf_fd_weights,
)
from manifoldpde.spectra import (
    EigenBasis,
    VbdmOperator,
    auto_tune_epsilon,
    eigensolve_srbf,
    eigensolve_vbdm,
    vbdm_build,
)
from manifoldpde.solvers import (
    OfflineTensors,
    SpectralSolution,
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
from manifoldpde.harness import (
    ConvergenceReport,
    ExperimentConfig,
    error_vs_modes,
    linf_error,
    paper_ellipse_config,
    paper_torus_config,
    relative_difference,
    run_convergence,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
