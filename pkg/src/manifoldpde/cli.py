"""Command-line entry point.

Subcommands: ``convergence`` (N-sweep over methods), ``modes`` (error vs
basis size), ``solve`` (single problem, per-point CSV), ``eigs`` (eigenvalue
dump), ``tangent-check`` (projection-error rates).  Every flag can also be
supplied through ``--config FILE`` holding ``key=value`` lines; command-line
flags win over the file.

Exit codes: 0 on success, 2 when any sweep cell failed, 1 on configuration
errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from manifoldpde import geometry, harness, operators, rbf, spectra, tangent
from manifoldpde.harness import ConfigError, ExperimentConfig, PRESETS


def _parse_int_list(text):
    return tuple(int(tok) for tok in str(text).replace(",", " ").split())


def _parse_str_list(text):
    return tuple(tok for tok in str(text).replace(",", " ").split())


def _parse_bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# config-file key -> converter; mirrors the ExperimentConfig fields
_CONVERTERS = {
    "manifold": str,
    "methods": _parse_str_list,
    "N_list": _parse_int_list,
    "trials": int,
    "K": int,
    "seed": int,
    "a": float,
    "R": float,
    "r": float,
    "cloud_path": str,
    "intrinsic_dim": int,
    "shape_eig": float,
    "shape_op": float,
    "pinv_tau": float,
    "tau_eig": float,
    "k_tangent": int,
    "tangent_order": str,
    "fd_kernel": str,
    "fd_shape": float,
    "fd_stencil": int,
    "vbdm_k1": _parse_int_list,
    "vbdm_k2": _parse_int_list,
    "eigs_per_trial": _parse_bool,
    "output": str,
}


def read_config_file(path) -> dict:
    """Parse a key=value config file into ExperimentConfig overrides."""
    overrides = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in _CONVERTERS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                overrides[key] = _CONVERTERS[key](value.strip())
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return overrides


def _add_common_flags(p):
    p.add_argument("--config", help="key=value file mirroring every flag")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="start from a named parameter preset")
    p.add_argument("--manifold", choices=("ellipse", "torus", "file"))
    p.add_argument("--methods", help="comma-separated method names")
    p.add_argument("--N-list", dest="N_list", help="comma-separated sample sizes")
    p.add_argument("--trials", type=int)
    p.add_argument("--K", type=int, help="number of eigenmodes (constant included)")
    p.add_argument("--seed", type=int)
    p.add_argument("--a", type=float, help="ellipse semi-axis")
    p.add_argument("--R", type=float, help="torus major radius")
    p.add_argument("--r", type=float, help="torus minor radius")
    p.add_argument("--cloud-path", dest="cloud_path", help="point-cloud text file")
    p.add_argument("--intrinsic-dim", dest="intrinsic_dim", type=int)
    p.add_argument("--shape-eig", dest="shape_eig", type=float,
                   help="IQ shape parameter for the eigenbasis kernel")
    p.add_argument("--shape-op", dest="shape_op", type=float,
                   help="IQ shape parameter for the operator kernel")
    p.add_argument("--pinv-tau", dest="pinv_tau", type=float)
    p.add_argument("--tau-eig", dest="tau_eig", type=float)
    p.add_argument("--k-tangent", dest="k_tangent", type=int)
    p.add_argument("--tangent-order", dest="tangent_order",
                   choices=("first", "second"))
    p.add_argument("--fd-kernel", dest="fd_kernel", choices=("phs3", "matern"))
    p.add_argument("--fd-shape", dest="fd_shape", type=float)
    p.add_argument("--fd-stencil", dest="fd_stencil", type=int)
    p.add_argument("--vbdm-k1", dest="vbdm_k1", help="comma list aligned with N-list")
    p.add_argument("--vbdm-k2", dest="vbdm_k2", help="comma list aligned with N-list")
    p.add_argument("--eigs-per-trial", dest="eigs_per_trial", action="store_true",
                   default=None, help="eigensolve every trial instead of transferring")
    p.add_argument("--output", "-o", help="CSV output path")


def build_config(args) -> ExperimentConfig:
    """Merge preset, config file, and command-line flags into one config."""
    overrides = {}
    if getattr(args, "config", None):
        overrides.update(read_config_file(args.config))
    for key, conv in _CONVERTERS.items():
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = conv(val) if isinstance(val, str) else val
    preset = getattr(args, "preset", None)
    if preset:
        return PRESETS[preset](**overrides)
    return dataclasses.replace(ExperimentConfig(), **overrides)


def cmd_convergence(args) -> int:
    cfg = build_config(args)
    report = harness.run_convergence(cfg)
    for method in cfg.methods:
        slope = report.slopes.get(method)
        line = f"{method}: slope = {slope:.3f}" if slope is not None else f"{method}: slope n/a"
        for N in cfg.N_list:
            stats = report.summary.get((method, N))
            if stats:
                line += f"  N={N}: {stats['mean']:.3e}"
        print(line)
    if cfg.output:
        print(f"wrote {cfg.output}")
    return 2 if report.any_failures else 0


def cmd_modes(args) -> int:
    cfg = build_config(args)
    K_list = _parse_int_list(args.K_list) if args.K_list else tuple(
        range(6, cfg.K + 1, 6))
    rows = harness.error_vs_modes(cfg, K_list)
    means = harness.modes_mean_errors(rows)
    for (N, K), err in sorted(means.items()):
        print(f"N={N} K={K}: {err:.6e}")
    if cfg.output:
        print(f"wrote {cfg.output}")
    return 0


def cmd_solve(args) -> int:
    cfg = build_config(args)
    method = args.method
    if method not in harness.METHODS:
        raise ConfigError(f"unknown method {method!r}")
    N = cfg.N_list[-1] if args.N is None else args.N
    cfg = dataclasses.replace(cfg, N_list=(N,), methods=(method,), trials=1)
    sample = (harness.make_sample(cfg, N, 0) if cfg.manifold != "file"
              else harness.make_file_problem(cfg))
    res = harness._Resources(sample, cfg, 0, 0, {})
    _, _, u = harness._run_method(method, res)
    have_truth = bool(np.all(np.isfinite(sample.truth_u)))
    out = cfg.output or "solution.csv"
    n = sample.cloud.ambient_dim
    with open(out, "w") as fh:
        coords = ",".join(f"x{i + 1}" for i in range(n))
        fh.write(f"{coords},u_true,u_est,abs_err\n")
        for i in range(sample.cloud.n_points):
            point = ",".join(f"{x:.17g}" for x in sample.cloud.points[i])
            if have_truth:
                err = abs(sample.truth_u[i] - u[i])
                fh.write(f"{point},{sample.truth_u[i]:.17g},{u[i]:.17g},{err:.17g}\n")
            else:
                fh.write(f"{point},nan,{u[i]:.17g},nan\n")
    if have_truth:
        print(f"{method} N={N}: linf error = {harness.linf_error(sample.truth_u, u):.6e}")
    print(f"wrote {out}")
    return 0


def cmd_eigs(args) -> int:
    cfg = build_config(args)
    N = cfg.N_list[-1] if args.N is None else args.N
    cfg = dataclasses.replace(cfg, N_list=(N,))
    sample = (harness.make_sample(cfg, N, 0) if cfg.manifold != "file"
              else harness.make_file_problem(cfg))
    res = harness._Resources(sample, cfg, 0, 0, {})
    basis = res.basis_vbdm() if args.source == "vbdm" else res.basis_srbf()
    n_show = min(args.show, basis.n_points)
    out = cfg.output or "eigs.csv"
    with open(out, "w") as fh:
        head = ",".join(f"phi_at_{i}" for i in range(n_show))
        fh.write(f"mode,eigenvalue,{head}\n")
        for k in range(basis.n_modes):
            vals = ",".join(f"{v:.17g}" for v in basis.vectors[:n_show, k])
            fh.write(f"{k},{basis.eigenvalues[k]:.17g},{vals}\n")
    print(f"{basis.source} basis, {basis.n_modes} modes; "
          f"lambda_1..5 = {np.array2string(basis.eigenvalues[1:6], precision=4)}")
    print(f"wrote {out}")
    return 0


def cmd_tangent_check(args) -> int:
    cfg = build_config(args)
    rows = []
    for N in cfg.N_list:
        sample = harness.make_sample(cfg, N, 0)
        cloud = sample.cloud
        table = geometry.knn(cloud, cfg.tangent_k(N))
        exact = _exact_projectors(cfg, sample)
        for order, estimator in (
            ("first", tangent.estimate_tangent_first_order),
            ("second", tangent.estimate_tangent_second_order),
        ):
            proj = estimator(cloud, table)
            err = float(tangent.projection_errors(proj, exact).max())
            rows.append((N, order, err))
            print(f"N={N} {order}-order: max projection error = {err:.6e}")
    for order in ("first", "second"):
        pts = [(np.log(N), np.log(e)) for N, o, e in rows if o == order and e > 0]
        if len(pts) >= 2:
            x, y = np.array(pts).T
            print(f"{order}-order slope: {np.polyfit(x, y, 1)[0]:.3f}")
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write("N,order,max_projection_error\n")
            for N, order, err in rows:
                fh.write(f"{N},{order},{err:.17g}\n")
        print(f"wrote {cfg.output}")
    return 0


def _exact_projectors(cfg, sample) -> np.ndarray:
    """Closed-form tangent projectors for the analytic manifolds."""
    if cfg.manifold == "ellipse":
        theta = sample.params[:, 0]
        t = np.column_stack([-np.sin(theta), cfg.a * np.cos(theta)])
        t /= np.linalg.norm(t, axis=1, keepdims=True)
        return t[:, :, None] * t[:, None, :]
    if cfg.manifold == "torus":
        theta, phi = sample.params.T
        t1 = np.column_stack([-np.sin(theta) * np.cos(phi),
                              -np.sin(theta) * np.sin(phi), np.cos(theta)])
        t2 = np.column_stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)])
        return (t1[:, :, None] * t1[:, None, :]) + (t2[:, :, None] * t2[:, None, :])
    raise ConfigError("tangent-check needs an analytic manifold")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="manifoldpde",
        description="Mesh-free elliptic PDE solvers on point-cloud manifolds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convergence", help="run an N-sweep over methods")
    _add_common_flags(p)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("modes", help="error against number of eigenmodes")
    _add_common_flags(p)
    p.add_argument("--K-list", dest="K_list", help="comma-separated mode counts")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("solve", help="solve one problem and dump per-point CSV")
    _add_common_flags(p)
    p.add_argument("--method", required=True, choices=harness.METHODS)
    p.add_argument("--N", type=int, help="sample size (default: largest in N-list)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eigs", help="dump an eigenbasis as CSV")
    _add_common_flags(p)
    p.add_argument("--source", choices=("srbf", "vbdm"), default="srbf")
    p.add_argument("--N", type=int)
    p.add_argument("--show", type=int, default=8,
                   help="number of leading eigenvector entries per mode")
    p.set_defaults(func=cmd_eigs)

    p = sub.add_parser("tangent-check", help="projection-error rates by order")
    _add_common_flags(p)
    p.set_defaults(func=cmd_tangent_check)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (geometry.PointCloudError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
