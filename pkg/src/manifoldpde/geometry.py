"""Analytic test manifolds, point-cloud ingestion, and exact nearest neighbors.

Analytic manifolds come with closed-form ground truth: the solution field, the
diffusion coefficient, the reaction coefficient, and the forcing obtained by
differentiating through the induced metric. External clouds are read from a
plain text format (one point per line, ``#`` comments).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree


class PointCloudError(ValueError):
    """Malformed or inconsistent point-cloud input."""


class DuplicatePointError(PointCloudError):
    """Two rows of a cloud coincide exactly."""


@dataclass(frozen=True)
class PointCloud:
    """N points in ambient R^n sampled from a d-dimensional manifold.

    Parameters
    ----------
    points : ndarray, shape (N, n)
        Ambient coordinates, one point per row.
    intrinsic_dim : int
        Dimension d of the underlying manifold, 1 <= d < n.
    """

    points: np.ndarray
    intrinsic_dim: int

    def __post_init__(self):
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(self.points, dtype=float)))
        object.__setattr__(self, "points", pts)
        if pts.ndim != 2:
            raise PointCloudError("points must be a 2-D array")
        n = pts.shape[1]
        d = self.intrinsic_dim
        if n < 2:
            raise PointCloudError(f"ambient dimension must be >= 2, got {n}")
        if not 1 <= d < n:
            raise PointCloudError(f"need 1 <= intrinsic_dim < {n}, got {d}")
        if pts.shape[0] < d + 2:
            raise PointCloudError(f"need at least {d + 2} points, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise PointCloudError("points contain non-finite coordinates")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise DuplicatePointError("point cloud contains duplicate points")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class ManifoldSample:
    """A point cloud on an analytic manifold plus ground-truth fields.

    ``params`` holds the intrinsic chart coordinates (radians) used to embed
    each point; ``truth_u``, ``kappa``, ``c_field``, ``forcing_f`` are the PDE
    data restricted to the sample.
    """

    cloud: PointCloud
    params: np.ndarray
    truth_u: np.ndarray
    kappa: np.ndarray
    c_field: np.ndarray
    forcing_f: np.ndarray

    def __post_init__(self):
        N = self.cloud.n_points
        for name in ("truth_u", "kappa", "c_field", "forcing_f"):
            vec = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, vec)
            if vec.shape != (N,):
                raise PointCloudError(f"{name} must have shape ({N},)")
        params = np.atleast_2d(np.asarray(self.params, dtype=float))
        if params.shape[0] != N:
            params = params.T
        object.__setattr__(self, "params", params)
        if np.any(self.kappa <= 0):
            raise PointCloudError("kappa must be strictly positive")
        if np.any(self.c_field <= 0):
            raise PointCloudError("c must be strictly positive")


@dataclass(frozen=True)
class NeighborTable:
    """Exact k-nearest-neighbor indices and distances, ascending per row."""

    indices: np.ndarray
    distances: np.ndarray
    include_self: bool = field(default=False)

    @property
    def k(self) -> int:
        return self.indices.shape[1]


def _ellipse_forcing(theta: np.ndarray, a: float, c: float = 1.0) -> np.ndarray:
    # f = -|g|^{-1/2} d/dtheta( kappa |g|^{1/2} g^{11} u' ) + c u  with
    # u = sin^2(theta), kappa = 1.1 + sin^2(theta), |g| = sin^2 + a^2 cos^2,
    # g^{11} = 1/|g|; the derivative is expanded by hand below.
    detg = np.sin(theta) ** 2 + a**2 * np.cos(theta) ** 2
    ddetg = (1.0 - a**2) * np.sin(2 * theta)
    u = np.sin(theta) ** 2
    du = np.sin(2 * theta)
    ddu = 2.0 * np.cos(2 * theta)
    kap = 1.1 + np.sin(theta) ** 2
    dkap = np.sin(2 * theta)
    return -(dkap * du + kap * ddu) / detg + kap * du * ddetg / (2.0 * detg**2) + c * u


def sample_ellipse(N: int, a: float = 2.0, seed: int = 0) -> ManifoldSample:
    """Sample the ellipse (cos t, a sin t) at N angles uniform on [0, 2pi).

    Ground truth: u = sin^2(t), kappa = 1.1 + sin^2(t), c = 1, and f from the
    1-D weighted-Laplacian formula of the induced metric.
    """
    if N < 4:
        raise PointCloudError("ellipse sampling needs N >= 4")
    if a <= 0:
        raise PointCloudError("ellipse axis must be positive")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=N)
    points = np.column_stack([np.cos(theta), a * np.sin(theta)])
    return ManifoldSample(
        cloud=PointCloud(points, intrinsic_dim=1),
        params=theta[:, None],
        truth_u=np.sin(theta) ** 2,
        kappa=1.1 + np.sin(theta) ** 2,
        c_field=np.ones(N),
        forcing_f=_ellipse_forcing(theta, a),
    )


def _torus_forcing(theta, phi, R: float, r: float, c: float = 1.0) -> np.ndarray:
    # u = sin(phi) sin(theta), kappa = 1.1 + sin^2(theta) cos^2(phi),
    # sqrt|g| = r (R + r cos th), g^{11} = 1/r^2, g^{22} = (R + r cos th)^{-2}.
    A = R + r * np.cos(theta)
    u = np.sin(phi) * np.sin(theta)
    u_th = np.sin(phi) * np.cos(theta)
    u_phph = -u
    kap = 1.1 + np.sin(theta) ** 2 * np.cos(phi) ** 2
    kap_th = np.sin(2 * theta) * np.cos(phi) ** 2
    kap_ph = -np.sin(theta) ** 2 * np.sin(2 * phi)
    u_phi = np.cos(phi) * np.sin(theta)
    # d/dtheta [ kappa (A/r) u_theta ]  and  d/dphi [ kappa (r/A) u_phi ]
    d_th = (kap_th * A / r - kap * np.sin(theta)) * u_th + kap * (A / r) * (-u)
    d_ph = (r / A) * (kap_ph * u_phi + kap * u_phph)
    return -(d_th + d_ph) / (r * A) + c * u


def sample_torus(N: int, R: float = 2.0, r: float = 1.0, seed: int = 0) -> ManifoldSample:
    """Sample the torus of radii (R, r) at N angle pairs uniform on [0, 2pi)^2.

    Uniformity is in the chart (theta, phi), not in surface area.  Ground
    truth: u = sin(phi) sin(theta), kappa = 1.1 + sin^2(theta) cos^2(phi),
    c = 1, f from the 2-D weighted-Laplacian formula.
    """
    if N < 6:
        raise PointCloudError("torus sampling needs N >= 6")
    if not 0 < r < R:
        raise PointCloudError("torus radii must satisfy 0 < r < R")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=N)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=N)
    A = R + r * np.cos(theta)
    points = np.column_stack([A * np.cos(phi), A * np.sin(phi), r * np.sin(theta)])
    return ManifoldSample(
        cloud=PointCloud(points, intrinsic_dim=2),
        params=np.column_stack([theta, phi]),
        truth_u=np.sin(phi) * np.sin(theta),
        kappa=1.1 + np.sin(theta) ** 2 * np.cos(phi) ** 2,
        c_field=np.ones(N),
        forcing_f=_torus_forcing(theta, phi, R, r),
    )


def load_point_cloud(path, ambient_dim: int, intrinsic_dim: int) -> PointCloud:
    """Read a text point cloud: one point per line, ``#`` comments allowed.

    Coordinates may be separated by whitespace or commas.  Duplicate rows,
    wrong arity, and empty files are rejected.
    """
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != ambient_dim:
            raise PointCloudError(
                f"{path}:{lineno}: expected {ambient_dim} coordinates, got {len(parts)}"
            )
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise PointCloudError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise PointCloudError(f"{path}: no data lines")
    return PointCloud(np.array(rows), intrinsic_dim=intrinsic_dim)


def save_point_cloud(cloud: PointCloud, path) -> None:
    """Write a cloud in the text format accepted by :func:`load_point_cloud`."""
    with open(path, "w") as fh:
        fh.write(f"# {cloud.n_points} points in R^{cloud.ambient_dim}\n")
        for row in cloud.points:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def knn(cloud: PointCloud, k: int, include_self: bool = False) -> NeighborTable:
    """Exact k nearest Euclidean neighbors of every point.

    Ties are broken toward the smaller point index.  With
    ``include_self=True`` the query point itself occupies the first column at
    distance zero.
    """
    N = cloud.n_points
    if k >= N:
        raise PointCloudError(f"k={k} must be smaller than N={N}")
    tree = cKDTree(cloud.points)
    # query a few extra candidates so exact distance ties at the cutoff are
    # resolved by index rather than by tree traversal order
    m = min(N, k + 4)
    dist, idx = tree.query(cloud.points, k=m)
    order = np.lexsort((idx, dist), axis=1)
    dist = np.take_along_axis(dist, order, axis=1)
    idx = np.take_along_axis(idx, order, axis=1)
    if include_self:
        return NeighborTable(idx[:, :k].copy(), dist[:, :k].copy(), include_self=True)
    self_col = idx == np.arange(N)[:, None]
    keep_idx = np.empty((N, k), dtype=idx.dtype)
    keep_dist = np.empty((N, k), dtype=float)
    for i in range(N):
        mask = ~self_col[i]
        keep_idx[i] = idx[i, mask][:k]
        keep_dist[i] = dist[i, mask][:k]
    return NeighborTable(keep_idx, keep_dist, include_self=False)
