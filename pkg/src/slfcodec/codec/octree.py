"""Lossless octree occupancy coding of voxel geometry.

Breadth-first from the root: every occupied node at levels ``0 .. D-1``
emits one byte whose bit ``c`` is set when child ``c`` (Morton child order,
``c = x + 2y + 4z``) is occupied.  Nodes within a level are visited in
Morton order.  The depth is carried by the container header.
"""

from __future__ import annotations

import numpy as np

from ..errors import CorruptStream
from .voxel import VoxelCloud, morton_decode


def encode_geometry(vox: VoxelCloud) -> bytes:
    codes = vox.codes
    out = []
    for level in range(vox.depth):
        child_shift = np.uint64(3 * (vox.depth - level - 1))
        children = np.unique(codes >> child_shift)
        parents, inverse = np.unique(children >> np.uint64(3), return_inverse=True)
        masks = np.zeros(parents.size, dtype=np.uint8)
        bits = (np.uint8(1) << (children & np.uint64(7)).astype(np.uint8)).astype(np.uint8)
        np.bitwise_or.at(masks, inverse, bits)
        out.append(masks.tobytes())
    return b"".join(out)


def decode_geometry(data: bytes, depth: int, origin=(0.0, 0.0, 0.0), voxel_size: float = 1.0) -> VoxelCloud:
    """Rebuild the voxel set; raises :class:`CorruptStream` on malformed input."""
    raw = np.frombuffer(data, dtype=np.uint8)
    nodes = np.zeros(1, dtype=np.uint64)
    pos = 0
    for _ in range(depth):
        if pos + nodes.size > raw.size:
            raise CorruptStream("geometry payload truncated")
        masks = raw[pos:pos + nodes.size]
        pos += nodes.size
        if np.any(masks == 0):
            raise CorruptStream("occupied octree node with empty child mask")
        present = np.unpackbits(masks[:, None], axis=1, bitorder="little").astype(bool)
        parent_idx, child = np.nonzero(present)
        nodes = (nodes[parent_idx] << np.uint64(3)) | child.astype(np.uint64)
    if pos != raw.size:
        raise CorruptStream(f"{raw.size - pos} trailing bytes after geometry")
    return VoxelCloud(depth, morton_decode(nodes), origin, voxel_size)
