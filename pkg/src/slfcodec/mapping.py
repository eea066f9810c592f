"""Mapping multi-view images onto a point cloud.

For every (point, camera) pair the point is projected with a pinhole model,
tested against a per-camera z-buffer at image resolution, and accepted only
if the camera lies inside the validity cone around the point normal.  The
accepted samples form an :class:`ObservationSet`.

Pixel convention: the pixel cell of a projection ``(u, v)`` is
``(floor(u), floor(v))``; image samples are located at integer coordinates,
so bilinear sampling is defined on ``[0, W-1] x [0, H-1]``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .basis import DirectionParam
from .errors import InvalidArgument, OutOfBounds

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 10.0
UNIT_TOL = 1e-6


@dataclass
class CameraModel:
    """Pinhole camera: ``x_cam = R @ x_world + t``, pixels ``= K @ x_cam``."""

    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    width: int
    height: int
    camera_id: int = 0

    def __post_init__(self):
        self.intrinsics = np.asarray(self.intrinsics, dtype=float).reshape(3, 3)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        self.width = int(self.width)
        self.height = int(self.height)
        self.camera_id = int(self.camera_id)
        r = self.rotation
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9, rtol=0.0):
            raise InvalidArgument(f"camera {self.camera_id}: rotation is not orthonormal")
        if np.linalg.det(r) <= 0:
            raise InvalidArgument(f"camera {self.camera_id}: rotation has det(R) != +1")
        if self.width < 1 or self.height < 1:
            raise InvalidArgument(f"camera {self.camera_id}: image size must be >= 1")
        if self.intrinsics[0, 0] <= 0 or self.intrinsics[1, 1] <= 0:
            raise InvalidArgument(f"camera {self.camera_id}: focal lengths must be positive")

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0), *, width: int, height: int,
                focal: float, camera_id: int = 0) -> "CameraModel":
        """Camera at ``eye`` looking at ``target`` (x right, y down, z forward)."""
        eye = np.asarray(eye, dtype=float)
        forward = np.asarray(target, dtype=float) - eye
        norm = np.linalg.norm(forward)
        if norm == 0:
            raise InvalidArgument("eye and target coincide")
        forward = forward / norm
        up = np.asarray(up, dtype=float)
        right = np.cross(forward, up)
        if np.linalg.norm(right) < 1e-9:
            right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
        right = right / np.linalg.norm(right)
        down = np.cross(forward, right)
        rot = np.stack([right, down, forward])
        k = np.array([[focal, 0.0, width / 2.0], [0.0, focal, height / 2.0], [0.0, 0.0, 1.0]])
        return cls(k, rot, -rot @ eye, width, height, camera_id)


@dataclass
class PointCloud:
    """Point positions with optional unit normals and named per-point attributes."""

    positions: np.ndarray
    normals: np.ndarray | None = None
    attributes: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if self.normals.shape != self.positions.shape:
                raise InvalidArgument("positions and normals differ in length")
            lengths = np.linalg.norm(self.normals, axis=1)
            if lengths.size and np.abs(lengths - 1.0).max() > UNIT_TOL:
                raise InvalidArgument("normals must have unit length")
        for name, values in self.attributes.items():
            if len(values) != len(self.positions):
                raise InvalidArgument(f"attribute {name!r} has wrong length")

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def diameter(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.linalg.norm(self.positions.max(axis=0) - self.positions.min(axis=0)))


@dataclass
class ObservationSet:
    """Valid view-map samples, stored flat and grouped by point.

    Rows are sorted by (point index, camera id); ``offsets[p]:offsets[p+1]``
    selects the rows of point ``p``.  ``directions`` holds (theta, gamma).
    """

    point_count: int
    point_index: np.ndarray
    directions: np.ndarray
    colors: np.ndarray
    camera_id: np.ndarray
    offsets: np.ndarray = field(init=False)

    def __post_init__(self):
        self.point_index = np.asarray(self.point_index, dtype=np.int64).reshape(-1)
        self.directions = np.asarray(self.directions, dtype=float).reshape(-1, 2)
        self.colors = np.asarray(self.colors, dtype=float).reshape(-1, 3)
        self.camera_id = np.asarray(self.camera_id, dtype=np.int64).reshape(-1)
        n = self.point_index.shape[0]
        if not (self.directions.shape[0] == self.colors.shape[0] == self.camera_id.shape[0] == n):
            raise InvalidArgument("observation arrays differ in length")
        order = np.lexsort((self.camera_id, self.point_index))
        self.point_index = self.point_index[order]
        self.directions = self.directions[order]
        self.colors = self.colors[order]
        self.camera_id = self.camera_id[order]
        if n and (self.point_index[0] < 0 or self.point_index[-1] >= self.point_count):
            raise InvalidArgument("observation point index out of range")
        self.offsets = np.searchsorted(self.point_index, np.arange(self.point_count + 1))

    def __len__(self) -> int:
        return self.point_index.shape[0]

    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def for_point(self, p: int) -> slice:
        return slice(int(self.offsets[p]), int(self.offsets[p + 1]))

    @classmethod
    def empty(cls, point_count: int) -> "ObservationSet":
        return cls(point_count, np.zeros(0, int), np.zeros((0, 2)), np.zeros((0, 3)), np.zeros(0, int))


class Projection(NamedTuple):
    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray

    @property
    def behind(self):
        return self.depth <= 0


def project_points(cam: CameraModel, points) -> Projection:
    """Vectorized pinhole projection; ``u, v`` are NaN for points behind the camera."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    q = pts @ cam.rotation.T + cam.translation
    pix = q @ cam.intrinsics.T
    depth = q[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        front = depth > 0
        u = np.where(front, pix[:, 0] / pix[:, 2], np.nan)
        v = np.where(front, pix[:, 1] / pix[:, 2], np.nan)
    return Projection(u, v, depth)


def project_point(cam: CameraModel, p) -> tuple[float, float, float]:
    """Project one point; returns ``(u, v, depth)`` with ``depth <= 0`` meaning behind."""
    proj = project_points(cam, p)
    return float(proj.u[0]), float(proj.v[0]), float(proj.depth[0])


def _in_frame(cam: CameraModel, proj: Projection) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return (proj.depth > 0) & (proj.u >= 0) & (proj.u < cam.width) & (proj.v >= 0) & (proj.v < cam.height)


def visibility_mask(cloud: PointCloud, cam: CameraModel, depth_eps: float = 0.0,
                    projection: Projection | None = None) -> np.ndarray:
    """Z-buffer visibility at image resolution.

    A point is visible when it projects inside the frame in front of the
    camera and its depth is within ``depth_eps`` of the nearest depth in its
    pixel cell.
    """
    if depth_eps < 0:
        raise InvalidArgument("depth_eps must be non-negative")
    proj = projection if projection is not None else project_points(cam, cloud.positions)
    inside = _in_frame(cam, proj)
    visible = np.zeros(len(proj.depth), dtype=bool)
    idx = np.flatnonzero(inside)
    if idx.size == 0:
        return visible
    cell = np.floor(proj.v[idx]).astype(np.int64) * cam.width + np.floor(proj.u[idx]).astype(np.int64)
    nearest = np.full(cam.width * cam.height, np.inf)
    np.minimum.at(nearest, cell, proj.depth[idx])
    visible[idx] = proj.depth[idx] <= nearest[cell] + depth_eps
    return visible


def _cone_mask(normals: np.ndarray, view_dirs: np.ndarray, delta: float) -> np.ndarray:
    return np.einsum("ij,ij->i", normals, view_dirs) >= np.sin(np.deg2rad(delta))


def cone_valid(normal, view_dir, delta: float = DEFAULT_DELTA) -> bool:
    """True when ``view_dir`` lies within ``90 - delta`` degrees of ``normal``."""
    if not 0 <= delta < 90:
        raise InvalidArgument(f"delta must lie in [0, 90), got {delta}")
    n = np.asarray(normal, dtype=float)
    w = np.asarray(view_dir, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > UNIT_TOL or abs(np.linalg.norm(w) - 1.0) > UNIT_TOL:
        raise InvalidArgument("normal and view direction must be unit vectors")
    return bool(_cone_mask(n[None], w[None], delta)[0])


def sample_bilinear(image: np.ndarray, u, v) -> np.ndarray:
    """Bilinear blend of the four pixels around ``(u, v)``.

    Accepts scalar or array coordinates; returns shape ``(3,)`` or ``(K, 3)``.
    """
    img = np.asarray(image)
    h, w = img.shape[:2]
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    v_arr = np.atleast_1d(np.asarray(v, dtype=float))
    bad = ~((u_arr >= 0) & (u_arr <= w - 1) & (v_arr >= 0) & (v_arr <= h - 1))
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise OutOfBounds(f"sample ({u_arr[j]}, {v_arr[j]}) outside image of size {w}x{h}")
    x0 = np.minimum(np.floor(u_arr).astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(np.floor(v_arr).astype(np.int64), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (u_arr - x0)[:, None]
    fy = (v_arr - y0)[:, None]
    img = img.astype(float)
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    out = top * (1.0 - fy) + bottom * fy
    return out[0] if np.ndim(u) == 0 and np.ndim(v) == 0 else out


def view_directions(points, cam_center) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors from each point toward ``cam_center`` and their (theta, gamma)."""
    d = np.asarray(cam_center, dtype=float)[None, :] - np.asarray(points, dtype=float).reshape(-1, 3)
    norm = np.linalg.norm(d, axis=1)
    if np.any(norm == 0):
        raise InvalidArgument("camera center coincides with a point")
    d = d / norm[:, None]
    params = np.stack([np.arctan2(d[:, 1], d[:, 0]), np.clip(d[:, 2], -1.0, 1.0)], axis=1)
    return d, params


def direction_params(p, cam_center) -> DirectionParam:
    """(theta, gamma) of the unit direction from ``p`` to ``cam_center``.

    At the poles ``atan2(0, 0) = 0`` fixes theta.
    """
    _, params = view_directions(p, cam_center)
    return DirectionParam(float(params[0, 0]), float(params[0, 1]))


def estimate_normals(positions, k: int = 8) -> np.ndarray:
    """PCA normals from ``k`` nearest neighbours, oriented away from the centroid."""
    pts = np.asarray(positions, dtype=float).reshape(-1, 3)
    if k < 3:
        raise InvalidArgument(f"normal estimation needs k >= 3, got {k}")
    if len(pts) < k:
        raise InvalidArgument(f"normal estimation needs at least k={k} points, got {len(pts)}")
    _, nbrs = cKDTree(pts).query(pts, k=k)
    local = pts[nbrs] - pts[nbrs].mean(axis=1, keepdims=True)
    cov = np.einsum("pki,pkj->pij", local, local)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    outward = pts - pts.mean(axis=0)
    flip = np.einsum("ij,ij->i", normals, outward) < 0
    normals[flip] *= -1.0
    return normals / np.linalg.norm(normals, axis=1, keepdims=True)


def default_depth_eps(cloud: PointCloud) -> float:
    return 1e-4 * cloud.diameter


def _camera_samples(cloud: PointCloud, cam: CameraModel, image: np.ndarray, delta: float,
                    depth_eps: float):
    img = np.asarray(image)
    if img.shape[:2] != (cam.height, cam.width):
        raise InvalidArgument(
            f"camera {cam.camera_id}: image is {img.shape[1]}x{img.shape[0]}, "
            f"expected {cam.width}x{cam.height}"
        )
    proj = project_points(cam, cloud.positions)
    ok = visibility_mask(cloud, cam, depth_eps, projection=proj)
    with np.errstate(invalid="ignore"):
        ok &= (proj.u <= cam.width - 1) & (proj.v <= cam.height - 1)
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return idx, np.zeros((0, 2)), np.zeros((0, 3))
    unit, params = view_directions(cloud.positions[idx], cam.center)
    keep = _cone_mask(cloud.normals[idx], unit, delta)
    idx, params = idx[keep], params[keep]
    colors = sample_bilinear(img, proj.u[idx], proj.v[idx]) if idx.size else np.zeros((0, 3))
    return idx, params, colors.reshape(-1, 3)


def build_observations(cloud: PointCloud, cameras: Sequence[CameraModel], images: Sequence[np.ndarray],
                       delta: float = DEFAULT_DELTA, depth_eps: float | None = None,
                       threads: int = 1) -> ObservationSet:
    """Collect every visible, in-cone, in-frame sample of every point's view map."""
    if cloud.normals is None:
        raise InvalidArgument("point cloud has no normals")
    if len(cameras) != len(images):
        raise InvalidArgument(f"{len(cameras)} cameras but {len(images)} images")
    if not 0 <= delta < 90:
        raise InvalidArgument(f"delta must lie in [0, 90), got {delta}")
    ids = [c.camera_id for c in cameras]
    if len(set(ids)) != len(ids):
        raise InvalidArgument("camera ids must be unique")
    if depth_eps is None:
        depth_eps = default_depth_eps(cloud)

    def work(j):
        return _camera_samples(cloud, cameras[j], images[j], delta, depth_eps)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(len(cameras))))
    else:
        parts = [work(j) for j in range(len(cameras))]

    if not parts:
        return ObservationSet.empty(len(cloud))
    obs = ObservationSet(
        len(cloud),
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        np.concatenate([np.full(len(p[0]), cam.camera_id) for p, cam in zip(parts, cameras)]),
    )
    logger.debug("collected %d observations for %d points from %d cameras", len(obs), len(cloud), len(cameras))
    return obs
