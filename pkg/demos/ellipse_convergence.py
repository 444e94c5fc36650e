"""Convergence of four solvers on an ellipse, at desk scale.

Solves  -div(kappa grad u) + u = f  on the ellipse (cos t, 2 sin t) from
randomly sampled points, with kappa = 1.1 + sin^2(t) and a known solution
u = sin^2(t).  Four routes are compared as the sample grows:

  spectral_rbf   Galerkin on the leading weighted-Laplacian eigenmodes
  direct_rbf     dense collocation with global RBF operators
  direct_rbf_fd  sparse collocation with local polyharmonic stencils
  vbdm           graph-Laplacian (variable-bandwidth) collocation

This is a reduced version of the full benchmark (smaller N, fewer trials) so
it finishes in about a minute.  The full sweep lives behind
`manifoldpde convergence --preset paper-ellipse`.

Run:  python3 demos/ellipse_convergence.py
"""

from manifoldpde import harness

cfg = harness.paper_ellipse_config(
    N_list=(200, 400, 800),
    trials=2,
    vbdm_k1={200: 20, 400: 20, 800: 30},
    vbdm_k2={200: 10, 400: 10, 800: 15},
    output="ellipse_convergence.csv",
)
report = harness.run_convergence(cfg)

print(f"{'method':>14} " + " ".join(f"N={N:<6}" for N in cfg.N_list) + "  slope")
for method in cfg.methods:
    cells = " ".join(
        f"{report.mean_error(method, N):.2e}" for N in cfg.N_list
    )
    print(f"{method:>14} {cells}  {report.slopes[method]:+.2f}")
print("\nper-trial rows written to ellipse_convergence.csv")
