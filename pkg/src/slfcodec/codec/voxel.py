"""Voxelization onto a ``2**D`` grid and Morton ordering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument

MAX_DEPTH = 21


def _spread_bits(v: np.ndarray) -> np.ndarray:
    # insert two zero bits between consecutive bits of a 21-bit integer
    x = v.astype(np.uint64) & np.uint64(0x1FFFFF)
    x = (x | (x << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    x = (x | (x << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    x = (x | (x << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    x = (x | (x << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    x = (x | (x << np.uint64(2))) & np.uint64(0x1249249249249249)
    return x


def _compact_bits(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64) & np.uint64(0x1249249249249249)
    x = (x | (x >> np.uint64(2))) & np.uint64(0x10C30C30C30C30C3)
    x = (x | (x >> np.uint64(4))) & np.uint64(0x100F00F00F00F00F)
    x = (x | (x >> np.uint64(8))) & np.uint64(0x1F0000FF0000FF)
    x = (x | (x >> np.uint64(16))) & np.uint64(0x1F00000000FFFF)
    x = (x | (x >> np.uint64(32))) & np.uint64(0x1FFFFF)
    return x


def morton_encode(coords) -> np.ndarray:
    """Interleave ``(x, y, z)`` with x in the lowest bit of every triple."""
    c = np.asarray(coords).reshape(-1, 3)
    return _spread_bits(c[:, 0]) | (_spread_bits(c[:, 1]) << np.uint64(1)) | (_spread_bits(c[:, 2]) << np.uint64(2))


def morton_decode(codes) -> np.ndarray:
    m = np.asarray(codes, dtype=np.uint64)
    return np.stack([_compact_bits(m), _compact_bits(m >> np.uint64(1)), _compact_bits(m >> np.uint64(2))],
                    axis=1).astype(np.int64)


@dataclass
class VoxelCloud:
    """Occupied voxels in ascending Morton order.

    ``origin`` and ``voxel_size`` map voxel ``c`` back to world coordinates
    ``origin + (c + 0.5) * voxel_size``.  ``point_map[j]`` is the voxel that
    absorbed input point ``j`` (empty for decoded clouds).
    """

    depth: int
    coords: np.ndarray
    origin: np.ndarray
    voxel_size: float
    point_map: np.ndarray | None = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 3)
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        if not 1 <= self.depth <= MAX_DEPTH:
            raise InvalidArgument(f"voxel depth must lie in [1, {MAX_DEPTH}], got {self.depth}")

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def codes(self) -> np.ndarray:
        return morton_encode(self.coords)

    def positions(self) -> np.ndarray:
        return self.origin + (self.coords + 0.5) * self.voxel_size


def voxel_grid(positions, depth: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Integer cells of each position, plus the grid origin and cell size.

    The bounding box is scaled isotropically by its longest side so that the
    shape is preserved; the maximal coordinate is clamped into the last cell.
    """
    pts = np.asarray(positions, dtype=float).reshape(-1, 3)
    lo = pts.min(axis=0)
    extent = float((pts.max(axis=0) - lo).max())
    side = 1 << depth
    if extent == 0.0:
        return np.zeros(pts.shape, dtype=np.int64), lo, 1.0
    cells = np.floor((pts - lo) / extent * side).astype(np.int64)
    return np.clip(cells, 0, side - 1), lo, extent / side


def voxelize(positions, depth: int = 10, attributes: np.ndarray | None = None):
    """Quantize positions to a Morton-sorted set of unique voxels.

    Returns the :class:`VoxelCloud` and, when ``attributes`` (``(P, ...)``) is
    given, the per-voxel mean of the attributes of the merged points.
    """
    pts = np.asarray(positions, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise InvalidArgument("cannot voxelize an empty cloud")
    if not 1 <= depth <= MAX_DEPTH:
        raise InvalidArgument(f"voxel depth must lie in [1, {MAX_DEPTH}], got {depth}")
    cells, origin, size = voxel_grid(pts, depth)
    codes = morton_encode(cells)
    unique, point_map = np.unique(codes, return_inverse=True)
    vox = VoxelCloud(depth, morton_decode(unique), origin, size, point_map.astype(np.int64))
    if attributes is None:
        return vox, None
    attrs = np.asarray(attributes, dtype=float)
    flat = attrs.reshape(attrs.shape[0], -1)
    sums = np.zeros((len(unique), flat.shape[1]))
    np.add.at(sums, point_map, flat)
    counts = np.bincount(point_map, minlength=len(unique)).astype(float)
    means = (sums / counts[:, None]).reshape((len(unique),) + attrs.shape[1:])
    return vox, means
