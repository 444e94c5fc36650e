"""Experiment orchestration: N-sweeps, trial averaging, and convergence fits.

A sweep builds, per (N, trial), exactly the resources the selected methods
need (tangent frames, global or sparse operators, eigenbases, graph
Laplacians), shares them across methods, and scores every method against the
analytic truth.  Results land in a tidy CSV; no plotting here.

By convention the eigenbasis is computed on the first trial of each N and
moved onto the other trials' nodes by RBF interpolation; per-trial
eigensolves are available behind a flag.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field

import numpy as np

from manifoldpde import geometry, operators, rbf, solvers, spectra, tangent

METHODS = (
    "spectral_rbf",
    "direct_rbf",
    "direct_rbf_fd",
    "spectral_rbf_fd",
    "vbdm",
    "vbdm_rbf",
)

CSV_HEADER = "method,N,trial,K,error_linf,error_rel,offline_sec,online_sec,status"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment sweep."""

    manifold: str = "ellipse"
    methods: tuple = ("spectral_rbf", "direct_rbf")
    N_list: tuple = (400, 800, 1600)
    trials: int = 5
    K: int = 60
    seed: int = 0
    # manifold parameters
    a: float = 2.0
    R: float = 2.0
    r: float = 1.0
    cloud_path: str | None = None
    intrinsic_dim: int | None = None
    # kernels and inversion
    shape_eig: float = 1.0
    shape_op: float = 1.2
    pinv_tau: float = 1e-6
    tau_eig: float = 1e-4
    # tangent estimation
    k_tangent: int | None = None
    tangent_order: str = "second"
    # RBF-FD
    fd_kernel: str = "phs3"
    fd_shape: float = 2.5
    fd_stencil: int | None = None
    # VBDM neighbor counts: aligned tuple per N, a {N: value} mapping, or None
    vbdm_k1: object = None
    vbdm_k2: object = None
    eigs_per_trial: bool = False
    output: str | None = None

    def __post_init__(self):
        if self.manifold not in ("ellipse", "torus", "file"):
            raise ConfigError(f"unknown manifold {self.manifold!r}")
        if list(self.N_list) != sorted(self.N_list):
            raise ConfigError("N_list must be ascending")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}")
        for name in ("vbdm_k1", "vbdm_k2"):
            val = getattr(self, name)
            if isinstance(val, (tuple, list)) and len(val) != len(self.N_list):
                raise ConfigError(f"{name} list must align with N_list")
        if self.manifold == "file" and not self.cloud_path:
            raise ConfigError("file manifold needs cloud_path")

    def vbdm_params(self, iN: int, N: int) -> tuple:
        """(k1, k2) for the iN-th sweep point."""

        def pick(val, default):
            if val is None:
                return default
            if isinstance(val, dict):
                if N not in val:
                    raise ConfigError(f"no VBDM parameter recorded for N={N}")
                return val[N]
            if isinstance(val, (tuple, list)):
                return val[iN]
            return int(val)

        root = math.sqrt(N)
        return (
            pick(self.vbdm_k1, max(16, int(round(1.5 * root)))),
            pick(self.vbdm_k2, max(8, int(round(0.5 * root)))),
        )

    def tangent_k(self, N: int) -> int:
        return self.k_tangent if self.k_tangent else math.ceil(math.sqrt(N))

    def fd_stencil_size(self, N: int) -> int:
        if self.fd_stencil:
            return self.fd_stencil
        return 21 if self.fd_kernel == "phs3" else math.ceil(2.0 * math.sqrt(N))


_ELLIPSE_VBDM = {"k2": {400: 10, 800: 15, 1600: 25, 3200: 35, 6400: 50},
                 "k1": {400: 20, 800: 30, 1600: 45, 3200: 65, 6400: 120}}
_TORUS_VBDM = {"k2": {800: 14, 1600: 20, 3200: 28, 6400: 40, 12800: 55},
               "k1": {800: 28, 1600: 40, 3200: 56, 6400: 80, 12800: 110}}


def paper_ellipse_config(**overrides) -> ExperimentConfig:
    """Reference parameter set for the ellipse benchmark (a=2)."""
    base = ExperimentConfig(
        manifold="ellipse",
        a=2.0,
        methods=("spectral_rbf", "direct_rbf", "direct_rbf_fd", "vbdm"),
        N_list=(400, 800, 1600, 3200, 6400),
        trials=5,
        K=60,
        shape_eig=1.0,
        shape_op=1.2,
        fd_kernel="phs3",
        vbdm_k1=_ELLIPSE_VBDM["k1"],
        vbdm_k2=_ELLIPSE_VBDM["k2"],
    )
    return dataclasses.replace(base, **overrides)


def paper_torus_config(**overrides) -> ExperimentConfig:
    """Reference parameter set for the torus benchmark (R=2, r=1)."""
    base = ExperimentConfig(
        manifold="torus",
        R=2.0,
        r=1.0,
        methods=("spectral_rbf", "direct_rbf", "vbdm"),
        N_list=(800, 1600, 3200, 6400),
        trials=5,
        K=300,
        shape_eig=0.3,
        shape_op=0.7,
        vbdm_k1=_TORUS_VBDM["k1"],
        vbdm_k2=_TORUS_VBDM["k2"],
    )
    return dataclasses.replace(base, **overrides)


PRESETS = {"paper-ellipse": paper_ellipse_config, "paper-torus": paper_torus_config}


def linf_error(u_true: np.ndarray, u_est: np.ndarray) -> float:
    """max_i |u_true_i - u_est_i|."""
    u_true = np.asarray(u_true, float)
    u_est = np.asarray(u_est, float)
    if u_true.shape != u_est.shape:
        raise ValueError("length mismatch")
    return float(np.max(np.abs(u_true - u_est)))


def relative_difference(u_ref: np.ndarray, u_est: np.ndarray) -> float:
    """max_i |u_est_i - u_ref_i| / |u_ref_i|, skipping zero reference entries."""
    u_ref = np.asarray(u_ref, float)
    u_est = np.asarray(u_est, float)
    if u_ref.shape != u_est.shape:
        raise ValueError("length mismatch")
    mask = u_ref != 0
    if not np.any(mask):
        raise ValueError("all reference entries are zero")
    if not np.all(mask):
        import warnings

        warnings.warn(f"excluding {np.count_nonzero(~mask)} zero reference entries")
    return float(np.max(np.abs(u_est[mask] - u_ref[mask]) / np.abs(u_ref[mask])))


def make_sample(cfg: ExperimentConfig, N: int, trial: int) -> geometry.ManifoldSample:
    """Deterministic sample for one sweep cell; seeds derive from (seed, N, trial)."""
    seed = [cfg.seed, N, trial]
    if cfg.manifold == "ellipse":
        return geometry.sample_ellipse(N, a=cfg.a, seed=seed)
    if cfg.manifold == "torus":
        return geometry.sample_torus(N, R=cfg.R, r=cfg.r, seed=seed)
    return make_file_problem(cfg)


def make_file_problem(cfg: ExperimentConfig) -> geometry.ManifoldSample:
    """External cloud with a default synthetic problem (kappa = c = 1,
    f = sum of ambient coordinates); truth_u is NaN since none is known."""
    with open(cfg.cloud_path) as fh:
        first = next(line for line in fh if line.split("#", 1)[0].strip())
    n = len(first.split("#", 1)[0].replace(",", " ").split())
    cloud = geometry.load_point_cloud(cfg.cloud_path, ambient_dim=n,
                                      intrinsic_dim=cfg.intrinsic_dim or n - 1)
    N = cloud.n_points
    return geometry.ManifoldSample(
        cloud=cloud,
        params=np.zeros((N, 1)),
        truth_u=np.full(N, np.nan),
        kappa=np.ones(N),
        c_field=np.ones(N),
        forcing_f=cloud.points.sum(axis=1),
    )


@dataclass
class _BasisDonor:
    """Trial-1 eigensolve artifacts reused for interpolation transfer."""

    points: np.ndarray
    kernel: rbf.KernelSpec
    inverse: rbf.RegularizedInverse
    basis: spectra.EigenBasis
    source: str


class _Resources:
    """Lazy per-cell resource cache with build-time accounting."""

    def __init__(self, sample, cfg: ExperimentConfig, iN: int, trial: int,
                 donors: dict):
        self.sample = sample
        self.cfg = cfg
        self.iN = iN
        self.trial = trial
        self.donors = donors  # {"SRBF": _BasisDonor, "VBDM": _BasisDonor}
        self.times: dict = {}
        self._cache: dict = {}

    def _get(self, name, builder):
        if name not in self._cache:
            t0 = time.perf_counter()
            self._cache[name] = builder()
            self.times[name] = time.perf_counter() - t0
        return self._cache[name]

    @property
    def cloud(self):
        return self.sample.cloud

    def proj(self):
        def build():
            k = self.cfg.tangent_k(self.cloud.n_points)
            table = geometry.knn(self.cloud, k)
            if self.cfg.tangent_order == "first":
                return tangent.estimate_tangent_first_order(self.cloud, table)
            return tangent.estimate_tangent_second_order(self.cloud, table)

        return self._get("proj", build)

    def ops_global(self):
        def build():
            kernel = rbf.KernelSpec("iq", self.cfg.shape_op)
            return operators.global_diff_ops(
                self.cloud, kernel, self.proj(), method=rbf.Pinv(self.cfg.pinv_tau)
            )

        return self._get("ops_global", build)

    def fd_ops(self):
        def build():
            N = self.cloud.n_points
            if self.cfg.fd_kernel == "phs3":
                kernel = rbf.KernelSpec("phs3")
            else:
                kernel = rbf.KernelSpec("matern", self.cfg.fd_shape)
            return operators.rbf_fd_operator(
                self.cloud, kernel, self.cfg.fd_stencil_size(N), self.proj()
            )

        return self._get("fd_ops", build)

    def vbdm_op(self):
        def build():
            k1, k2 = self.cfg.vbdm_params(self.iN, self.cloud.n_points)
            return spectra.vbdm_build(self.cloud, k1=k1, k2=k2)

        return self._get("vbdm_op", build)

    def _transfer(self, donor: _BasisDonor) -> spectra.EigenBasis:
        moved = rbf.rbf_interpolant_eval(
            donor.points, donor.kernel, donor.inverse, donor.basis.vectors,
            self.cloud.points,
        )
        N = moved.shape[0]
        norms = np.sqrt((moved**2).sum(axis=0) / N)
        moved = moved / norms
        moved[:, 0] = 1.0  # trivial mode stays exact
        return spectra.EigenBasis(donor.basis.eigenvalues.copy(), moved, donor.source)

    def basis_srbf(self):
        def build():
            donor = self.donors.get("SRBF")
            if donor is not None and not self.cfg.eigs_per_trial:
                return self._transfer(donor)
            kernel = rbf.KernelSpec("iq", self.cfg.shape_eig)
            inverse = rbf.regularized_inverse(
                rbf.kernel_matrix(self.cloud, kernel), rbf.Pinv(self.cfg.pinv_tau)
            )
            grads = operators.gradient_matrices(self.cloud, kernel, inverse, self.proj())
            sym = None
            while grads:
                G = grads.pop()
                term = G.T @ G
                sym = term if sym is None else sym + term
                del G
            sym = (sym + sym.T) * 0.5
            basis = spectra.eigensolve_srbf(
                sym, self.cfg.K, rank_bound=inverse.effective_rank,
                tau_eig=self.cfg.tau_eig, allow_fewer=True,
            )
            del sym
            self.donors["SRBF"] = _BasisDonor(
                self.cloud.points, kernel, inverse, basis, "SRBF"
            )
            return basis

        return self._get("basis_srbf", build)

    def basis_vbdm(self):
        def build():
            donor = self.donors.get("VBDM")
            if donor is not None and not self.cfg.eigs_per_trial:
                return self._transfer(donor)
            basis = spectra.eigensolve_vbdm(self.vbdm_op(), self.cfg.K)
            kernel = rbf.KernelSpec("iq", self.cfg.shape_eig)
            inverse = rbf.regularized_inverse(
                rbf.kernel_matrix(self.cloud, kernel), rbf.Pinv(self.cfg.pinv_tau)
            )
            self.donors["VBDM"] = _BasisDonor(
                self.cloud.points, kernel, inverse, basis, "VBDM"
            )
            return basis

        return self._get("basis_vbdm", build)


def _run_method(method: str, res: _Resources):
    """One (method, cell) solve; returns offline resources time, online time,
    and the estimated solution."""
    s = res.sample
    used = []

    def offline_total(extra=0.0):
        # transfer trials skip some builds, hence the .get default
        return sum(res.times.get(name, 0.0) for name in used) + extra

    if method == "spectral_rbf":
        basis, ops = res.basis_srbf(), res.ops_global()
        used += ["proj", "basis_srbf", "ops_global"]
        t0 = time.perf_counter()
        off = solvers.galerkin_offline(basis, ops, s.c_field)
        t_off = time.perf_counter() - t0
        t0 = time.perf_counter()
        sol = solvers.galerkin_online(off, s.kappa, s.forcing_f, ops)
        return offline_total(t_off), time.perf_counter() - t0, sol.values
    if method == "direct_rbf":
        ops = res.ops_global()
        used += ["proj", "ops_global"]
        t0 = time.perf_counter()
        u = solvers.solve_direct_rbf(ops, s.kappa, s.c_field, s.forcing_f)
        return offline_total(), time.perf_counter() - t0, u
    if method == "direct_rbf_fd":
        ops = res.fd_ops()
        used += ["proj", "fd_ops"]
        t0 = time.perf_counter()
        u = solvers.solve_direct_rbf_fd(ops, s.kappa, s.c_field, s.forcing_f)
        return offline_total(), time.perf_counter() - t0, u
    if method == "spectral_rbf_fd":
        basis, ops = res.basis_srbf(), res.fd_ops()
        used += ["proj", "basis_srbf", "fd_ops"]
        t0 = time.perf_counter()
        sol = solvers.solve_spectral_rbf_fd(basis, ops, s.kappa, s.c_field, s.forcing_f)
        return offline_total(), time.perf_counter() - t0, sol.values
    if method == "vbdm":
        vb = res.vbdm_op()
        used += ["vbdm_op"]
        t0 = time.perf_counter()
        u = solvers.solve_vbdm_direct(vb, s.kappa, s.c_field, s.forcing_f)
        return offline_total(), time.perf_counter() - t0, u
    if method == "vbdm_rbf":
        basis, ops = res.basis_vbdm(), res.ops_global()
        used += ["proj", "vbdm_op", "basis_vbdm", "ops_global"]
        t0 = time.perf_counter()
        sol = solvers.solve_vbdm_rbf(basis, ops, s.kappa, s.c_field, s.forcing_f)
        return offline_total(), time.perf_counter() - t0, sol.values
    raise ConfigError(f"unknown method {method!r}")


@dataclass
class ConvergenceReport:
    """Per-cell rows plus per-(method, N) aggregates and fitted slopes."""

    rows: list
    config: ExperimentConfig
    summary: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)

    def mean_error(self, method: str, N: int) -> float:
        return self.summary[(method, N)]["mean"]

    @property
    def any_failures(self) -> bool:
        return any(r["status"] != "ok" for r in self.rows)


def _aggregate(rows, cfg) -> ConvergenceReport:
    report = ConvergenceReport(rows=rows, config=cfg)
    for method in cfg.methods:
        pts = []
        for N in cfg.N_list:
            errs = [r["error_linf"] for r in rows
                    if r["method"] == method and r["N"] == N and r["status"] == "ok"]
            if errs:
                stats = {"mean": float(np.mean(errs)), "min": float(np.min(errs)),
                         "max": float(np.max(errs))}
                report.summary[(method, N)] = stats
                pts.append((math.log(N), math.log(stats["mean"])))
        if len(pts) >= 2:
            x, y = np.array(pts).T
            report.slopes[method] = float(np.polyfit(x, y, 1)[0])
    return report


def _format_row(r) -> str:
    def fmt(x):
        return f"{x:.17g}"

    return ",".join([
        r["method"], str(r["N"]), str(r["trial"]), str(r["K"]),
        fmt(r["error_linf"]), fmt(r["error_rel"]),
        fmt(r["offline_sec"]), fmt(r["online_sec"]), r["status"],
    ])


def write_csv(rows, path) -> None:
    rows = sorted(rows, key=lambda r: (r["method"], r["N"], r["trial"]))
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in rows:
            fh.write(_format_row(r) + "\n")


def run_convergence(cfg: ExperimentConfig) -> ConvergenceReport:
    """Run the full (method, N, trial) sweep; failures are isolated per cell."""
    rows = []
    for iN, N in enumerate(cfg.N_list):
        donors: dict = {}
        for trial in range(cfg.trials):
            sample = (make_sample(cfg, N, trial) if cfg.manifold != "file"
                      else make_file_problem(cfg))
            res = _Resources(sample, cfg, iN, trial, donors)
            for method in cfg.methods:
                row = {"method": method, "N": N, "trial": trial, "K": cfg.K,
                       "error_linf": math.nan, "error_rel": math.nan,
                       "offline_sec": 0.0, "online_sec": 0.0, "status": "ok"}
                try:
                    t_off, t_on, u = _run_method(method, res)
                    row["offline_sec"], row["online_sec"] = t_off, t_on
                    # spectral rows report the modes actually used, which can
                    # fall below cfg.K when the spectrum is rank-limited
                    if method in ("spectral_rbf", "spectral_rbf_fd"):
                        row["K"] = res._cache["basis_srbf"].n_modes
                    elif method == "vbdm_rbf":
                        row["K"] = res._cache["basis_vbdm"].n_modes
                    if np.all(np.isfinite(sample.truth_u)):
                        row["error_linf"] = linf_error(sample.truth_u, u)
                        row["error_rel"] = relative_difference(sample.truth_u, u)
                except Exception as exc:  # noqa: BLE001 - cell isolation
                    row["status"] = f"error:{type(exc).__name__}"
                rows.append(row)
            del res
    report = _aggregate(rows, cfg)
    if cfg.output:
        write_csv(rows, cfg.output)
    return report


def error_vs_modes(cfg: ExperimentConfig, K_list) -> list:
    """Spectral-RBF error against basis size, reusing one offline build per
    (N, trial) and slicing the stored tensors per K."""
    K_list = sorted(K_list)
    if K_list[-1] > cfg.K:
        raise ConfigError(f"K_list exceeds configured spectrum size {cfg.K}")
    spectral = [m for m in cfg.methods if m.startswith("spectral")]
    if not spectral:
        raise ConfigError("error_vs_modes needs a spectral method in methods")
    rows = []
    for iN, N in enumerate(cfg.N_list):
        donors: dict = {}
        for trial in range(cfg.trials):
            sample = make_sample(cfg, N, trial)
            res = _Resources(sample, cfg, iN, trial, donors)
            basis, ops = res.basis_srbf(), res.ops_global()
            off = solvers.galerkin_offline(basis, ops, sample.c_field)
            for K in K_list:
                sol = solvers.galerkin_online(off.truncate(K), sample.kappa,
                                              sample.forcing_f, ops)
                rows.append({"N": N, "trial": trial, "K": K,
                             "error_linf": linf_error(sample.truth_u, sol.values)})
            del res
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write("N,trial,K,error_linf\n")
            for r in rows:
                fh.write(f"{r['N']},{r['trial']},{r['K']},{r['error_linf']:.17g}\n")
    return rows


def modes_mean_errors(rows) -> dict:
    """Aggregate :func:`error_vs_modes` rows into {(N, K): mean error}."""
    out: dict = {}
    for r in rows:
        out.setdefault((r["N"], r["K"]), []).append(r["error_linf"])
    return {key: float(np.mean(v)) for key, v in out.items()}
