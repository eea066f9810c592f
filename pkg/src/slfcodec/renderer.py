"""View-map reconstruction and point-splat rendering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .basis import BasisSpec, basis_matrix
from .errors import InvalidArgument
from .mapping import CameraModel, project_points, view_directions


@dataclass(frozen=True)
class RenderConfig:
    width: int = 256
    height: int = 256
    splat_radius: int = 1
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidArgument("render size must be at least 1x1")
        if self.splat_radius < 0:
            raise InvalidArgument("splat radius must be non-negative")


def reconstruct_colors(coeffs, spec: BasisSpec, directions, clamp: bool = True) -> np.ndarray:
    """Evaluate view maps: ``coeffs`` is ``(P, channels, N)``, ``directions`` ``(P, 2)``."""
    a = np.asarray(coeffs, dtype=float)
    if a.ndim != 3 or a.shape[2] != spec.count:
        raise InvalidArgument(f"coefficients must have shape (P, channels, {spec.count}), got {a.shape}")
    d = np.asarray(directions, dtype=float).reshape(-1, 2)
    if d.shape[0] != a.shape[0]:
        raise InvalidArgument(f"{a.shape[0]} coefficient vectors but {d.shape[0]} directions")
    G = basis_matrix(spec, d)
    out = np.einsum("pcn,pn->pc", a, G)
    return np.clip(out, 0.0, 255.0) if clamp else out


def reconstruct_color(alpha, spec: BasisSpec, direction, clamp: bool = True) -> np.ndarray:
    """One point's color seen from ``direction``; ``alpha`` is ``(channels, N)``."""
    a = np.asarray(alpha, dtype=float)
    if a.ndim != 2 or a.shape[1] != spec.count:
        raise InvalidArgument(f"alpha must have shape (channels, {spec.count}), got {a.shape}")
    return reconstruct_colors(a[None], spec, np.asarray(direction, dtype=float)[None], clamp)[0]


def splat(positions, colors_fn: Callable[[np.ndarray, np.ndarray], np.ndarray], cam: CameraModel,
          cfg: RenderConfig) -> np.ndarray:
    """Z-buffered square splats; returns a float ``(H, W, 3)`` image.

    ``colors_fn(indices, directions)`` gives the colors of the listed points
    seen along ``directions`` (unit vectors from point to camera, shape
    ``(K, 3)``).  Each visible point covers the ``(2r+1)**2`` pixels around
    its pixel cell; the nearest depth wins and equal depths go to the lower
    point index.
    """
    pts = np.asarray(positions, dtype=float).reshape(-1, 3)
    image = np.empty((cfg.height, cfg.width, 3))
    image[:] = np.asarray(cfg.background, dtype=float)
    if pts.shape[0] == 0:
        return image
    # rendering resolution can differ from the camera's native one
    sx, sy = cfg.width / cam.width, cfg.height / cam.height
    proj = project_points(cam, pts)
    with np.errstate(invalid="ignore"):
        u, v = proj.u * sx, proj.v * sy
        ok = (proj.depth > 0) & (u >= 0) & (u < cfg.width) & (v >= 0) & (v < cfg.height)
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return image
    unit, _ = view_directions(pts[idx], cam.center)
    colors = np.asarray(colors_fn(idx, unit), dtype=float).reshape(-1, 3)
    cx = np.floor(u[idx]).astype(np.int64)
    cy = np.floor(v[idx]).astype(np.int64)
    r = cfg.splat_radius
    offs = np.arange(-r, r + 1)
    ox, oy = np.meshgrid(offs, offs, indexing="xy")
    px = (cx[:, None] + ox.ravel()[None, :]).ravel()
    py = (cy[:, None] + oy.ravel()[None, :]).ravel()
    owner = np.repeat(np.arange(idx.size), ox.size)
    inside = (px >= 0) & (px < cfg.width) & (py >= 0) & (py < cfg.height)
    px, py, owner = px[inside], py[inside], owner[inside]
    pixel = py * cfg.width + px
    order = np.lexsort((idx[owner], proj.depth[idx][owner], pixel))
    pixel, owner = pixel[order], owner[order]
    first = np.ones(pixel.size, dtype=bool)
    first[1:] = pixel[1:] != pixel[:-1]
    flat = image.reshape(-1, 3)
    flat[pixel[first]] = colors[owner[first]]
    return image


def render(positions, coeffs, spec: BasisSpec, cam: CameraModel, cfg: RenderConfig) -> np.ndarray:
    """Render a coefficient-carrying point cloud from ``cam``."""
    a = np.asarray(coeffs, dtype=float)
    pts = np.asarray(positions, dtype=float).reshape(-1, 3)
    if a.ndim != 3 or a.shape[0] != pts.shape[0] or a.shape[2] != spec.count:
        raise InvalidArgument("coefficients do not match the point cloud or basis")

    def colors(indices, unit):
        params = np.stack([np.arctan2(unit[:, 1], unit[:, 0]), np.clip(unit[:, 2], -1.0, 1.0)], axis=1)
        return reconstruct_colors(a[indices], spec, params)

    return splat(pts, colors, cam, cfg)
