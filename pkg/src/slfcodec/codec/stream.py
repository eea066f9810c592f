"""Self-contained SLF bitstream: header, octree geometry, coefficient planes.

Layout (little-endian)::

    magic "SLF1" | version u8 | depth u8 | voxel count u32
    order u8 | scale_theta u8 | scale_gamma u8 | channels u8 | Q f32
    origin 3 x f64 | voxel size f64
    geometry length u32 | geometry payload
    N x channels plane blocks: k u8 | length u32 | payload

Plane ``i * channels + ch`` holds basis coefficient ``i`` of channel ``ch``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..basis import BasisSpec
from ..errors import CorruptStream, InvalidArgument, UnsupportedStream
from .entropy import dequantize, entropy_decode, entropy_encode, quantize
from .octree import decode_geometry, encode_geometry
from .raht import RahtPlan
from .voxel import VoxelCloud, voxelize

MAGIC = b"SLF1"
VERSION = 1
_HEAD = struct.Struct("<4sBBIBBBBf4dI")
_PLANE = struct.Struct("<BI")


@dataclass
class SlfBitstream:
    depth: int
    point_count: int
    spec: BasisSpec
    channels: int
    q: float
    origin: tuple[float, float, float]
    voxel_size: float
    geometry: bytes
    planes: list[tuple[int, bytes]] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        head = _HEAD.pack(MAGIC, VERSION, self.depth, self.point_count, self.spec.order,
                          self.spec.scale_theta, self.spec.scale_gamma, self.channels, self.q,
                          *self.origin, self.voxel_size, len(self.geometry))
        parts = [head, self.geometry]
        for k, payload in self.planes:
            parts.append(_PLANE.pack(k, len(payload)))
            parts.append(payload)
        return b"".join(parts)

    @property
    def total_bits(self) -> int:
        return 8 * (_HEAD.size + len(self.geometry) + sum(_PLANE.size + len(p) for _, p in self.planes))

    @property
    def plane_bits(self) -> int:
        """Bits spent on coefficient planes alone (block headers included)."""
        return 8 * sum(_PLANE.size + len(p) for _, p in self.planes)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SlfBitstream":
        if len(data) < 5 or data[:4] != MAGIC:
            raise UnsupportedStream("not an SLF stream (bad magic)")
        if data[4] != VERSION:
            raise UnsupportedStream(f"unsupported SLF stream version {data[4]}")
        if len(data) < _HEAD.size:
            raise CorruptStream("header truncated")
        (_, _, depth, count, order, s0, s1, channels, q, ox, oy, oz, size, glen) = _HEAD.unpack_from(data)
        try:
            spec = BasisSpec(order, s0, s1, strict=False)
        except InvalidArgument as exc:
            raise CorruptStream(f"bad basis header: {exc}") from None
        pos = _HEAD.size
        if pos + glen > len(data):
            raise CorruptStream("geometry payload truncated")
        geometry = data[pos:pos + glen]
        pos += glen
        planes = []
        for i in range(spec.count * channels):
            if pos + _PLANE.size > len(data):
                raise CorruptStream(f"plane {i} header truncated")
            k, length = _PLANE.unpack_from(data, pos)
            pos += _PLANE.size
            if pos + length > len(data):
                raise CorruptStream(f"plane {i} payload truncated")
            planes.append((k, data[pos:pos + length]))
            pos += length
        if pos != len(data):
            raise CorruptStream(f"{len(data) - pos} trailing bytes")
        return cls(depth, count, spec, channels, q, (ox, oy, oz), size, geometry, planes)


def _to_planes(coeffs: np.ndarray) -> np.ndarray:
    n, channels, count = coeffs.shape
    return coeffs.transpose(0, 2, 1).reshape(n, count * channels)


def _from_planes(planes: np.ndarray, channels: int, count: int) -> np.ndarray:
    return planes.reshape(planes.shape[0], count, channels).transpose(0, 2, 1)


def _step(q: float) -> float:
    q32 = float(np.float32(q))
    if not (q32 > 0 and np.isfinite(q32)):
        raise InvalidArgument(f"quantization step {q} is not representable as a positive f32")
    return q32


def encode_stream_with_reconstruction(positions, coeffs, spec: BasisSpec, q: float, depth: int = 10):
    """Encode, returning ``(stream, voxels, reconstruction)``.

    ``reconstruction`` is what any decoder of the stream will produce: the
    per-voxel coefficients after quantization in the RAHT domain.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    pts = np.asarray(positions, dtype=float).reshape(-1, 3)
    if coeffs.ndim != 3 or coeffs.shape[0] != pts.shape[0] or coeffs.shape[2] != spec.count:
        raise InvalidArgument(f"coefficients of shape {coeffs.shape} do not match {pts.shape[0]} points "
                              f"and N={spec.count}")
    channels = coeffs.shape[1]
    qs = _step(q)
    vox, merged = voxelize(pts, depth, coeffs)
    plan = RahtPlan.for_voxels(vox)
    transformed = plan.forward(_to_planes(merged))
    levels = quantize(transformed, qs)
    planes = []
    for j in range(levels.shape[1]):
        data = entropy_encode(levels[:, j])
        planes.append((data[0], data[1:]))
    stream = SlfBitstream(depth, len(vox), spec, channels, qs, tuple(float(v) for v in vox.origin),
                          float(vox.voxel_size), encode_geometry(vox), planes)
    recon = _from_planes(plan.inverse(dequantize(levels, qs)), channels, spec.count)
    return stream, vox, recon


def encode_stream(positions, coeffs, spec: BasisSpec, q: float, depth: int = 10) -> SlfBitstream:
    return encode_stream_with_reconstruction(positions, coeffs, spec, q, depth)[0]


def decode_stream(stream) -> tuple[VoxelCloud, np.ndarray]:
    """Decode bytes (or a parsed stream) into voxels and ``(voxels, channels, N)`` coefficients."""
    if isinstance(stream, (bytes, bytearray, memoryview)):
        stream = SlfBitstream.from_bytes(bytes(stream))
    vox = decode_geometry(stream.geometry, stream.depth, stream.origin, stream.voxel_size)
    if len(vox) != stream.point_count:
        raise CorruptStream(f"geometry decodes to {len(vox)} voxels, header says {stream.point_count}")
    n = len(vox)
    levels = np.empty((n, len(stream.planes)), dtype=np.int64)
    for j, (k, payload) in enumerate(stream.planes):
        levels[:, j] = entropy_decode(bytes([k]) + payload, n)
    plan = RahtPlan.for_voxels(vox)
    coeffs = _from_planes(plan.inverse(dequantize(levels, stream.q)), stream.channels, stream.spec.count)
    return vox, coeffs
