import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slfcodec.basis import BasisSpec
from slfcodec.codec import (SlfBitstream, VoxelCloud, decode_geometry, decode_stream, dequantize, encode_geometry,
                            encode_stream, encode_stream_with_reconstruction, entropy_decode, entropy_encode,
                            morton_decode, morton_encode, quantize, raht_forward, raht_inverse, unzigzag, voxelize,
                            zigzag)
from slfcodec.codec.entropy import best_order, codeword_lengths
from slfcodec.errors import CorruptStream, InvalidArgument, UnsupportedStream

from oracles import (oracle_expgolomb_bits, oracle_expgolomb_encode, oracle_octree_bytes, oracle_voxelize,
                     oracle_zigzag)


def random_voxels(count, depth=6, seed=0):
    rng = np.random.default_rng(seed)
    side = 1 << depth
    codes = np.unique(rng.integers(0, side ** 3, count * 2))[:count]
    coords = morton_decode(np.sort(rng.permutation(codes)))
    return VoxelCloud(depth, coords, np.zeros(3), 1.0)


class TestMorton:
    def test_interleave(self):
        assert morton_encode([[1, 0, 0], [0, 1, 0], [0, 0, 1], [3, 0, 0]]).tolist() == [1, 2, 4, 9]

    def test_round_trip(self):
        c = np.random.default_rng(0).integers(0, 1 << 21, (200, 3))
        assert np.array_equal(morton_decode(morton_encode(c)), c)


class TestVoxelize:
    def test_single_point(self):
        vox, _ = voxelize([[1.0, 2.0, 3.0]], 4)
        assert vox.coords.tolist() == [[0, 0, 0]]
        assert vox.point_map.tolist() == [0]

    def test_merge_averages(self):
        pts = [[0, 0, 0], [0.01, 0, 0], [1, 1, 1]]
        vox, means = voxelize(pts, 2, np.array([[2.0], [4.0], [7.0]]))
        assert len(vox) == 2
        assert means[:, 0].tolist() == [3.0, 7.0]
        assert vox.point_map.tolist() == [0, 0, 1]

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_oracle(self, seed):
        pts = np.random.default_rng(seed).normal(size=(1000, 3)) * [1, 2, 0.5]
        vox, _ = voxelize(pts, 10)
        assert [tuple(c) for c in vox.coords.tolist()] == oracle_voxelize(pts, 10)

    def test_sorted_unique(self):
        vox, _ = voxelize(np.random.default_rng(1).uniform(size=(3000, 3)), 4)
        codes = vox.codes
        assert np.all(codes[1:] > codes[:-1])

    def test_positions_inside_cells(self):
        pts = np.random.default_rng(2).uniform(-3, 5, (500, 3))
        vox, _ = voxelize(pts, 8)
        assert np.abs(vox.positions()[vox.point_map] - pts).max() <= vox.voxel_size * math.sqrt(3) / 2 + 1e-12

    def test_errors(self):
        with pytest.raises(InvalidArgument):
            voxelize(np.zeros((0, 3)), 4)
        with pytest.raises(InvalidArgument):
            voxelize([[0, 0, 0.0]], 0)
        with pytest.raises(InvalidArgument):
            voxelize([[0, 0, 0.0]], 22)


class TestRaht:
    def test_single_voxel(self):
        vox = VoxelCloud(3, [[1, 2, 3]], np.zeros(3), 1.0)
        coeffs, weights = raht_forward(vox, [5.0])
        assert coeffs.tolist() == [5.0] and weights.tolist() == [1.0]
        assert raht_inverse(vox, coeffs).tolist() == [5.0]

    def test_sibling_pair(self):
        vox = VoxelCloud(1, [[0, 0, 0], [1, 0, 0]], np.zeros(3), 1.0)
        coeffs, weights = raht_forward(vox, [4.0, 4.0])
        assert coeffs[0] == pytest.approx(4 * math.sqrt(2), abs=1e-12)
        assert coeffs[1] == pytest.approx(0.0, abs=1e-12)
        assert weights.tolist() == [2.0, 2.0]

    def test_pair_formula(self):
        vox = VoxelCloud(1, [[0, 0, 0], [1, 0, 0]], np.zeros(3), 1.0)
        coeffs, _ = raht_forward(vox, [1.0, 3.0])
        assert coeffs == pytest.approx([4 / math.sqrt(2), 2 / math.sqrt(2)], abs=1e-12)

    def test_weighted_merge(self):
        # (0,0,0) and (1,0,0) merge along x; their parent then meets (0,1,0) along y with weights 2 and 1
        vox = VoxelCloud(1, [[0, 0, 0], [1, 0, 0], [0, 1, 0]], np.zeros(3), 1.0)
        x = np.array([1.0, 3.0, 5.0])
        coeffs, weights = raht_forward(vox, x)
        a = 4 / math.sqrt(2)
        dc = (math.sqrt(2) * a + 5.0) / math.sqrt(3)
        ac = (-1.0 * a + math.sqrt(2) * 5.0) / math.sqrt(3)
        assert coeffs == pytest.approx([dc, ac, 2 / math.sqrt(2)], abs=1e-12)
        assert weights.tolist() == [3.0, 3.0, 2.0]

    @pytest.mark.parametrize("count", [16, 300])
    def test_energy(self, count):
        vox = random_voxels(count, 5, seed=count)
        x = np.random.default_rng(count).normal(size=count) * 40
        coeffs, _ = raht_forward(vox, x)
        assert abs(np.sum(coeffs ** 2) - np.sum(x ** 2)) <= 1e-9 * np.sum(x ** 2)

    def test_dc_of_constant(self):
        vox = random_voxels(100, 4, seed=3)
        coeffs, _ = raht_forward(vox, np.full(100, 2.0))
        assert coeffs[0] == pytest.approx(20.0, rel=1e-12)
        assert np.abs(coeffs[1:]).max() < 1e-10

    def test_round_trip(self):
        vox = random_voxels(4096, 7, seed=4)
        x = np.random.default_rng(4).uniform(-100, 100, 4096)
        coeffs, _ = raht_forward(vox, x)
        assert np.abs(raht_inverse(vox, coeffs) - x).max() < 1e-9

    def test_zero_inverse(self):
        vox = random_voxels(50, 4)
        assert np.all(raht_inverse(vox, np.zeros(50)) == 0)

    def test_columns_match_single_planes(self):
        vox = random_voxels(64, 4, seed=5)
        x = np.random.default_rng(5).normal(size=(64, 3))
        both, _ = raht_forward(vox, x)
        for j in range(3):
            assert np.allclose(both[:, j], raht_forward(vox, x[:, j])[0], rtol=0, atol=1e-12)

    def test_length_mismatch(self):
        vox = random_voxels(10, 3)
        with pytest.raises(InvalidArgument):
            raht_forward(vox, np.zeros(9))
        with pytest.raises(InvalidArgument):
            raht_inverse(vox, np.zeros(11))


class TestQuantize:
    @pytest.mark.parametrize("f,q,level,back", [(7, 4, 2, 8), (0, 3, 0, 0), (-6, 4, -2, -8), (2, 4, 1, 4),
                                                (-2, 4, -1, -4), (1.9, 4, 0, 0)])
    def test_examples(self, f, q, level, back):
        assert quantize(f, q) == level
        assert dequantize(level, q) == back

    def test_bad_step(self):
        with pytest.raises(InvalidArgument):
            quantize(1.0, 0.0)
        with pytest.raises(InvalidArgument):
            dequantize(1, -1.0)

    def test_error_bound(self):
        x = np.random.default_rng(0).uniform(-1000, 1000, 10000)
        assert np.abs(dequantize(quantize(x, 8.0), 8.0) - x).max() <= 4.0


class TestEntropy:
    def test_zigzag(self):
        assert zigzag([-1, 3, 0, -3]).tolist() == [1, 6, 0, 5]
        vals = list(range(-50, 51))
        assert zigzag(vals).tolist() == [oracle_zigzag(v) for v in vals]
        assert unzigzag(zigzag(vals)).tolist() == vals

    def test_eight_zeros(self):
        assert entropy_encode(np.zeros(8, dtype=int), k=0) == b"\x00\xff"
        assert entropy_encode(np.zeros(8, dtype=int)) == b"\x00\xff"

    @pytest.mark.parametrize("k", [0, 1, 3, 7])
    def test_bits_match_oracle(self, k):
        levels = np.random.default_rng(k).integers(-300, 300, 500)
        assert int(codeword_lengths(zigzag(levels), k).sum()) == oracle_expgolomb_bits(levels, k)
        assert entropy_encode(levels, k) == oracle_expgolomb_encode(levels, k)

    def test_best_order_is_minimal(self):
        levels = np.random.default_rng(9).integers(-40, 40, 300)
        k, bits = best_order(zigzag(levels))
        assert bits == min(oracle_expgolomb_bits(levels, j) for j in range(32))
        assert bits == oracle_expgolomb_bits(levels, k)

    def test_round_trip_geometric(self):
        rng = np.random.default_rng(10)
        mag = rng.geometric(0.05, 10 ** 6) - 1
        levels = np.where(rng.random(10 ** 6) < 0.5, -mag, mag)
        data = entropy_encode(levels)
        assert np.array_equal(entropy_decode(data, levels.size), levels)

    @given(st.lists(st.integers(-(1 << 40), 1 << 40), max_size=60), st.integers(0, 31))
    @settings(max_examples=100, deadline=None)
    def test_round_trip_property(self, levels, k):
        data = entropy_encode(np.array(levels, dtype=np.int64), k)
        assert entropy_decode(data, len(levels)).tolist() == levels

    def test_large_values(self):
        levels = np.array([(1 << 61) - 1, -(1 << 61), 0])
        assert entropy_decode(entropy_encode(levels), 3).tolist() == levels.tolist()

    def test_truncated(self):
        data = entropy_encode(np.arange(100))
        with pytest.raises(CorruptStream):
            entropy_decode(data[:-3], 100)
        with pytest.raises(CorruptStream):
            entropy_decode(b"", 1)

    def test_bad_order(self):
        with pytest.raises(InvalidArgument):
            entropy_encode([1], 32)
        with pytest.raises(CorruptStream):
            entropy_decode(bytes([40, 0]), 1)


class TestGeometry:
    def test_single_voxel_sizes(self):
        for depth, want in ((1, 1), (3, 3)):
            vox = VoxelCloud(depth, [[1, 0, 1]], np.zeros(3), 1.0)
            data = encode_geometry(vox)
            assert len(data) == want == oracle_octree_bytes([(1, 0, 1)], depth)
            assert decode_geometry(data, depth).coords.tolist() == [[1, 0, 1]]

    def test_round_trip(self):
        vox = random_voxels(4096, 8, seed=11)
        data = encode_geometry(vox)
        assert len(data) == oracle_octree_bytes([tuple(c) for c in vox.coords.tolist()], 8)
        back = decode_geometry(data, 8)
        assert np.array_equal(back.coords, vox.coords)

    def test_empty_mask(self):
        with pytest.raises(CorruptStream):
            decode_geometry(b"\x00", 1)

    def test_truncated(self):
        data = encode_geometry(random_voxels(100, 5))
        with pytest.raises(CorruptStream):
            decode_geometry(data[:-1], 5)
        with pytest.raises(CorruptStream):
            decode_geometry(data + b"\x01", 5)


def _random_cloud(points=400, spec=BasisSpec(2, 1, 1, strict=False), seed=0, scale=50.0):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-1, 1, (points, 3))
    return pos, rng.normal(size=(points, 3, spec.count)) * scale, spec


class TestStream:
    def test_self_consistency(self):
        pos, coeffs, spec = _random_cloud()
        stream, vox, recon = encode_stream_with_reconstruction(pos, coeffs, spec, 8.0, 8)
        vox2, decoded = decode_stream(stream.to_bytes())
        assert np.array_equal(vox2.coords, vox.coords)
        assert np.abs(decoded - recon).max() < 1e-9
        assert np.allclose(vox2.positions(), vox.positions(), rtol=0, atol=1e-12)

    def test_decoder_deterministic(self):
        pos, coeffs, spec = _random_cloud(seed=1)
        data = encode_stream(pos, coeffs, spec, 4.0).to_bytes()
        assert np.array_equal(decode_stream(data)[1], decode_stream(data)[1])

    def test_encoder_deterministic(self):
        pos, coeffs, spec = _random_cloud(seed=2)
        assert encode_stream(pos, coeffs, spec, 4.0).to_bytes() == encode_stream(pos, coeffs, spec, 4.0).to_bytes()

    def test_near_lossless(self):
        pos, coeffs, spec = _random_cloud(seed=3)
        _, vox, _ = encode_stream_with_reconstruction(pos, coeffs, spec, 1e-6, 10)
        _, means = voxelize(pos, 10, coeffs)
        _, decoded = decode_stream(encode_stream(pos, coeffs, spec, 1e-6, 10).to_bytes())
        assert np.abs(decoded - means).max() < 1e-4

    def test_bits_decrease_with_q(self):
        pos, coeffs, spec = _random_cloud(seed=4)
        bits = [encode_stream(pos, coeffs, spec, q).total_bits for q in (8, 16, 32)]
        assert bits[0] > bits[1] > bits[2]

    def test_total_bits_is_byte_length(self):
        pos, coeffs, spec = _random_cloud(seed=5)
        s = encode_stream(pos, coeffs, spec, 8.0)
        assert s.total_bits == 8 * len(s.to_bytes())
        assert 0 < s.plane_bits < s.total_bits

    def test_error_bound(self):
        pos, coeffs, spec = _random_cloud(seed=6)
        q = 8.0
        _, vox, recon = encode_stream_with_reconstruction(pos, coeffs, spec, q, 10)
        _, means = voxelize(pos, 10, coeffs)
        assert np.abs(recon - means).max() <= q / 2 * math.sqrt(len(vox))

    def test_smooth_plane_soft_bound(self):
        rng = np.random.default_rng(7)
        pos = rng.uniform(-1, 1, (2000, 3))
        spec = BasisSpec(2, 0, 0, strict=False)
        coeffs = (100 + 30 * pos[:, :1] - 20 * pos[:, 1:2] ** 2)[:, :, None].repeat(3, axis=1)
        q = 4.0
        _, vox, recon = encode_stream_with_reconstruction(pos, coeffs, spec, q, 6)
        _, means = voxelize(pos, 6, coeffs)
        assert np.abs(recon - means).max() <= 2 * q

    def test_header_fields(self):
        pos, coeffs, spec = _random_cloud(seed=8)
        s = SlfBitstream.from_bytes(encode_stream(pos, coeffs, spec, 2.5, 7).to_bytes())
        assert (s.depth, s.spec.count, s.channels, s.q) == (7, spec.count, 3, 2.5)
        assert len(s.planes) == 3 * spec.count

    def test_bad_magic_and_version(self):
        pos, coeffs, spec = _random_cloud(points=20, seed=9)
        data = bytearray(encode_stream(pos, coeffs, spec, 8.0).to_bytes())
        with pytest.raises(UnsupportedStream):
            decode_stream(b"XLF1" + bytes(data[4:]))
        data[4] = 9
        with pytest.raises(UnsupportedStream):
            decode_stream(bytes(data))

    def test_truncated(self):
        pos, coeffs, spec = _random_cloud(points=20, seed=10)
        data = encode_stream(pos, coeffs, spec, 8.0).to_bytes()
        for cut in (10, 40, len(data) // 2, len(data) - 1):
            with pytest.raises(CorruptStream):
                decode_stream(data[:cut])
        with pytest.raises(CorruptStream):
            decode_stream(data + b"\x00")

    def test_shape_mismatch(self):
        pos, coeffs, spec = _random_cloud(points=20)
        with pytest.raises(InvalidArgument):
            encode_stream(pos[:-1], coeffs, spec, 8.0)
        with pytest.raises(InvalidArgument):
            encode_stream(pos, coeffs, spec, 0.0)
