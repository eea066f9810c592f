"""Geometry and coefficient-plane compression."""

from .entropy import dequantize, entropy_decode, entropy_encode, quantize, unzigzag, zigzag
from .octree import decode_geometry, encode_geometry
from .raht import RahtPlan, raht_forward, raht_inverse
from .stream import SlfBitstream, decode_stream, encode_stream, encode_stream_with_reconstruction
from .voxel import VoxelCloud, morton_decode, morton_encode, voxelize

__all__ = [
    "RahtPlan",
    "SlfBitstream",
    "VoxelCloud",
    "decode_geometry",
    "decode_stream",
    "dequantize",
    "encode_geometry",
    "encode_stream",
    "encode_stream_with_reconstruction",
    "entropy_decode",
    "entropy_encode",
    "morton_decode",
    "morton_encode",
    "quantize",
    "raht_forward",
    "raht_inverse",
    "unzigzag",
    "voxelize",
    "zigzag",
]
