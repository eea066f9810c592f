"""Per-point view-map fitting.

Each point's coefficients solve a ridge problem on its own observations.  A
second term pulls them toward the mean coefficients of the point's spatial
neighbours, which makes coefficient planes smoother and cheaper to code.
The neighbour means are refreshed with Jacobi sweeps: every point in
iteration ``k`` reads only iteration ``k-1`` values, so the result does not
depend on processing order.

Coefficients are stored as an array of shape ``(points, channels, N)``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.spatial import cKDTree

from .basis import BasisSpec, basis_matrix
from .errors import InvalidArgument, NumericalFailure
from .mapping import ObservationSet, PointCloud

logger = logging.getLogger(__name__)

# smallest acceptable ratio of Cholesky pivots before a lambda=0 system is called singular
_PIVOT_RATIO = 1e-7


@dataclass(frozen=True)
class FitConfig:
    lam: float = 0.8
    beta: float = 1.3
    max_iters: int = 10
    neighbors: int = 8
    convergence_tol: float = 1e-4

    def __post_init__(self):
        if self.lam < 0 or self.beta < 0:
            raise InvalidArgument("lambda and beta must be non-negative")
        if self.max_iters < 0:
            raise InvalidArgument("max_iters must be non-negative")
        if self.neighbors < 1:
            raise InvalidArgument("neighbor count must be >= 1")
        if not self.convergence_tol > 0:
            raise InvalidArgument("convergence_tol must be positive")


def _factor(gram: np.ndarray, shift: float, point_index=None):
    a = gram + shift * np.eye(gram.shape[0])
    try:
        c, lower = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise NumericalFailure("system is not positive definite", point_index) from None
    if shift == 0:
        d = np.abs(np.diag(c))
        if d.size and d.min() <= _PIVOT_RATIO * d.max():
            raise NumericalFailure("singular system (lambda=0 with rank-deficient G'G)", point_index)
    return c, lower


def _solve(G: np.ndarray, rhs: np.ndarray, shift: float, point_index=None) -> np.ndarray:
    n = G.shape[1]
    if shift == 0 and G.shape[0] < n:
        raise NumericalFailure(f"singular system: {G.shape[0]} observations for {n} unknowns", point_index)
    factor = _factor(G.T @ G, shift, point_index)
    return scipy.linalg.cho_solve(factor, rhs, check_finite=False)


def fit_ridge(c, G, lam: float) -> np.ndarray:
    """Minimizer of ``|c - G a|^2 + lam |a|^2``.

    ``c`` may be a vector or an ``(M, channels)`` matrix sharing ``G``.
    """
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    if lam < 0:
        raise InvalidArgument("lambda must be non-negative")
    if c.shape[0] != G.shape[0]:
        raise InvalidArgument(f"{c.shape[0]} observations but G has {G.shape[0]} rows")
    return _solve(G, G.T @ c, float(lam))


def fit_smoothed(c, G, lam: float, beta: float, alpha_bar) -> np.ndarray:
    """Minimizer of ``|c - G a|^2 + lam |a|^2 + beta |a - alpha_bar|^2``."""
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    alpha_bar = np.asarray(alpha_bar, dtype=float)
    if lam < 0 or beta < 0:
        raise InvalidArgument("lambda and beta must be non-negative")
    if c.shape[0] != G.shape[0]:
        raise InvalidArgument(f"{c.shape[0]} observations but G has {G.shape[0]} rows")
    if alpha_bar.shape[0] != G.shape[1]:
        raise InvalidArgument("alpha_bar length differs from basis count")
    return _solve(G, G.T @ c + beta * alpha_bar, float(lam) + float(beta))


def neighbor_table(positions, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other points, nearest first.

    Ties in distance go to the lower point index.
    """
    pts = np.asarray(positions, dtype=float).reshape(-1, 3)
    n = len(pts)
    if k >= n:
        raise InvalidArgument(f"need more than k={k} points for neighbour averaging, got {n}")
    tree = cKDTree(pts)
    extra = 4
    while True:
        q = min(n, k + 1 + extra)
        dist, idx = tree.query(pts, k=q)
        dist = dist.reshape(n, q)
        idx = idx.reshape(n, q)
        # exact squared distances so that ties compare equal
        d2 = np.sum((pts[idx] - pts[:, None, :]) ** 2, axis=2)
        d2[idx == np.arange(n)[:, None]] = np.inf
        order = np.lexsort((idx, d2), axis=1)
        d2 = np.take_along_axis(d2, order, axis=1)
        idx = np.take_along_axis(idx, order, axis=1)
        # the k-th pick is safe only if a strictly farther candidate was seen
        if q == n or np.all(d2[:, k - 1] < d2[:, q - 2]):
            return idx[:, :k]
        extra *= 2


def neighbor_average(cloud: PointCloud, coeffs: np.ndarray, point_index: int, k: int) -> np.ndarray:
    """Mean coefficient vector of the ``k`` nearest neighbours of one point."""
    nbrs = neighbor_table(cloud.positions, k)[point_index]
    return np.asarray(coeffs, dtype=float)[nbrs].mean(axis=0)


def point_objective(c, G, alpha, lam: float, beta: float, alpha_bar) -> float:
    """``|c - G a|^2 + lam |a|^2 + beta |a - alpha_bar|^2`` summed over channels."""
    r = np.asarray(c) - np.asarray(G) @ alpha
    d = alpha - alpha_bar
    return float(np.sum(r * r) + lam * np.sum(alpha * alpha) + beta * np.sum(d * d))


class _PointSystems:
    """Per-point ``G`` blocks and right-hand sides shared by every sweep."""

    def __init__(self, obs: ObservationSet, spec: BasisSpec):
        self.obs = obs
        self.G = basis_matrix(spec, obs.directions) if len(obs) else np.zeros((0, spec.count))
        self.n = spec.count

    def block(self, p: int):
        s = self.obs.for_point(p)
        return self.G[s], self.obs.colors[s]

    def solve(self, p: int, lam: float, beta: float, alpha_bar: np.ndarray | None) -> np.ndarray:
        G, c = self.block(p)
        rhs = G.T @ c
        if alpha_bar is not None and beta > 0:
            rhs = rhs + beta * alpha_bar
        shift = lam + (beta if alpha_bar is not None else 0.0)
        return _solve(G, rhs, shift, point_index=p).T


def _sweep(systems: _PointSystems, count: int, lam: float, beta: float, alpha_bar, threads: int):
    out = np.empty((count, 3, systems.n))

    def work(chunk):
        for p in chunk:
            out[p] = systems.solve(p, lam, beta, None if alpha_bar is None else alpha_bar[p].T)

    chunks = np.array_split(np.arange(count), max(1, threads))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    else:
        work(chunks[0])
    return out


def solve_slf(obs: ObservationSet, cloud: PointCloud, spec: BasisSpec, cfg: FitConfig = FitConfig(),
              threads: int = 1,
              callback: Callable[[int, np.ndarray, np.ndarray, np.ndarray], None] | None = None) -> np.ndarray:
    """Fit coefficients for every point; returns shape ``(points, 3, N)``.

    Starts from the per-point ridge solution, then runs up to
    ``cfg.max_iters`` Jacobi sweeps of the smoothed problem, stopping early
    once the largest relative per-point change drops below
    ``cfg.convergence_tol``.  ``callback(k, previous, alpha_bar, current)``
    is invoked after every sweep.
    """
    if obs.point_count != len(cloud):
        raise InvalidArgument(f"observations cover {obs.point_count} points, cloud has {len(cloud)}")
    systems = _PointSystems(obs, spec)
    count = len(cloud)
    alpha = _sweep(systems, count, cfg.lam, cfg.beta, None, threads)
    if cfg.max_iters == 0 or count == 0:
        return alpha
    nbrs = neighbor_table(cloud.positions, cfg.neighbors)
    for k in range(1, cfg.max_iters + 1):
        alpha_bar = alpha[nbrs].mean(axis=1)
        new = _sweep(systems, count, cfg.lam, cfg.beta, alpha_bar, threads)
        if callback is not None:
            callback(k, alpha, alpha_bar, new)
        change = np.linalg.norm((new - alpha).reshape(count, -1), axis=1)
        scale = np.linalg.norm(alpha.reshape(count, -1), axis=1)
        rel = float(np.max(change / np.maximum(scale, 1e-12)))
        alpha = new
        logger.debug("sweep %d: max relative change %.3e", k, rel)
        if rel < cfg.convergence_tol:
            break
    return alpha


def check_coefficients(coeffs: np.ndarray, spec: BasisSpec, points: int | None = None) -> np.ndarray:
    """Validate a ``(points, channels, N)`` coefficient array."""
    a = np.asarray(coeffs, dtype=float)
    if a.ndim != 3 or a.shape[2] != spec.count:
        raise InvalidArgument(f"coefficients must have shape (points, channels, {spec.count}), got {a.shape}")
    if points is not None and a.shape[0] != points:
        raise InvalidArgument(f"coefficients cover {a.shape[0]} points, expected {points}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgument("coefficients contain non-finite values")
    return a
