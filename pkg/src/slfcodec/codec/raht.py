"""Region-adaptive hierarchical transform (RAHT).

Voxels are merged bottom-up through the octree one axis at a time (x, then
y, then z within each level).  Two occupied siblings with values ``a, b``
and weights ``w1, w2`` become

    DC = ( sqrt(w1) a + sqrt(w2) b) / sqrt(w1 + w2)
    AC = (-sqrt(w2) a + sqrt(w1) b) / sqrt(w1 + w2)

and the DC node carries weight ``w1 + w2``; a node without a sibling passes
through unchanged.  Output order is the root DC followed by the AC
coefficients from the coarsest merge step to the finest, each step in
Morton order.  The transform is orthonormal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument
from .voxel import VoxelCloud


@dataclass
class _Step:
    left: np.ndarray       # index of the lower sibling, in the finer node array
    survivors: np.ndarray  # finer-node indices that persist to the coarser array
    left_pos: np.ndarray   # position of each merged pair in the coarser array
    sqrt_w1: np.ndarray
    sqrt_w2: np.ndarray
    norm: np.ndarray
    size: int              # node count before this step


class RahtPlan:
    """Merge schedule of a voxel set; independent of the attribute values."""

    def __init__(self, codes: np.ndarray, depth: int):
        codes = np.asarray(codes, dtype=np.uint64)
        if codes.size and np.any(codes[1:] <= codes[:-1]):
            raise InvalidArgument("Morton codes must be strictly increasing")
        self.count = int(codes.size)
        weights = np.ones(self.count)
        self.steps: list[_Step] = []
        ac_weights = []
        for _ in range(3 * depth):
            key = codes >> np.uint64(1)
            is_left = np.zeros(codes.size, dtype=bool)
            is_left[:-1] = key[:-1] == key[1:]
            left = np.flatnonzero(is_left)
            is_right = np.zeros_like(is_left)
            is_right[left + 1] = True
            survivors = np.flatnonzero(~is_right)
            w1, w2 = weights[left], weights[left + 1]
            total = w1 + w2
            self.steps.append(_Step(left, survivors, np.searchsorted(survivors, left),
                                    np.sqrt(w1), np.sqrt(w2), np.sqrt(total), codes.size))
            ac_weights.append(total)
            weights = weights[survivors]
            weights[self.steps[-1].left_pos] = total
            codes = key[survivors]
        self.coefficient_weights = np.concatenate([weights] + ac_weights[::-1]) if self.count else np.zeros(0)

    @classmethod
    def for_voxels(cls, vox: VoxelCloud) -> "RahtPlan":
        return cls(vox.codes, vox.depth)

    def forward(self, values) -> np.ndarray:
        x = np.asarray(values, dtype=float)
        if x.shape[0] != self.count:
            raise InvalidArgument(f"plane has {x.shape[0]} values for {self.count} voxels")
        acs = []
        for st in self.steps:
            a, b = x[st.left], x[st.left + 1]
            w1 = st.sqrt_w1.reshape((-1,) + (1,) * (x.ndim - 1))
            w2 = st.sqrt_w2.reshape(w1.shape)
            nrm = st.norm.reshape(w1.shape)
            dc = (w1 * a + w2 * b) / nrm
            acs.append((w1 * b - w2 * a) / nrm)
            x = x[st.survivors]
            x[st.left_pos] = dc
        if self.count == 0:
            return x.copy()
        return np.concatenate([x] + acs[::-1])

    def inverse(self, coeffs) -> np.ndarray:
        c = np.asarray(coeffs, dtype=float)
        if c.shape[0] != self.count:
            raise InvalidArgument(f"{c.shape[0]} coefficients for {self.count} voxels")
        if self.count == 0:
            return c.copy()
        x = c[:1]
        pos = 1
        for st in reversed(self.steps):
            npairs = st.left.size
            ac = c[pos:pos + npairs]
            pos += npairs
            w1 = st.sqrt_w1.reshape((-1,) + (1,) * (c.ndim - 1))
            w2 = st.sqrt_w2.reshape(w1.shape)
            nrm = st.norm.reshape(w1.shape)
            dc = x[st.left_pos]
            finer = np.empty((st.size,) + c.shape[1:])
            finer[st.survivors] = x
            finer[st.left] = (w1 * dc - w2 * ac) / nrm
            finer[st.left + 1] = (w2 * dc + w1 * ac) / nrm
            x = finer
        return x


def raht_forward(vox: VoxelCloud, plane) -> tuple[np.ndarray, np.ndarray]:
    """Transform one attribute plane (or several as columns).

    Returns the coefficients and the weight attached to each coefficient
    (total voxel count for the root DC, merged weight for each AC).
    """
    plan = RahtPlan.for_voxels(vox)
    return plan.forward(plane), plan.coefficient_weights


def raht_inverse(vox: VoxelCloud, coeffs) -> np.ndarray:
    return RahtPlan.for_voxels(vox).inverse(coeffs)
