import numpy as np
import pytest

from slfcodec.basis import BasisSpec
from slfcodec.io import (FormatError, image_name, read_coefficients, read_ply, read_ppm, read_rig, to_uint8,
                         write_coefficients, write_ply, write_ppm, write_rig)
from slfcodec.mapping import PointCloud
from slfcodec.synthetic import RigLayout, rig_cameras


@pytest.mark.parametrize("binary", [True, False])
def test_ply_round_trip(tmp_path, binary):
    rng = np.random.default_rng(0)
    pos = rng.normal(size=(50, 3))
    nrm = rng.normal(size=(50, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    path = tmp_path / "c.ply"
    write_ply(path, PointCloud(pos, nrm), binary=binary)
    back = read_ply(path)
    assert np.array_equal(back.positions, pos) and np.array_equal(back.normals, nrm)


def test_ply_without_normals(tmp_path):
    path = tmp_path / "c.ply"
    write_ply(path, PointCloud(np.eye(3)))
    assert read_ply(path).normals is None


def test_ply_float_and_extra_properties(tmp_path):
    path = tmp_path / "c.ply"
    head = ("ply\nformat binary_little_endian 1.0\ncomment hand made\nelement vertex 2\n"
            "property float x\nproperty float y\nproperty float z\nproperty uchar red\nend_header\n")
    rows = np.zeros(2, dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("r", "u1")])
    rows["x"] = [1.5, -2.0]
    rows["z"] = [0.25, 3.0]
    path.write_bytes(head.encode() + rows.tobytes())
    cloud = read_ply(path)
    assert cloud.positions.tolist() == [[1.5, 0.0, 0.25], [-2.0, 0.0, 3.0]]


@pytest.mark.parametrize("text", ["plx\n", "ply\nformat binary_big_endian 1.0\nelement vertex 1\nend_header\n",
                                  "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\n"
                                  "property double y\nproperty double z\nend_header\n0 0 0\n"])
def test_ply_errors(tmp_path, text):
    path = tmp_path / "bad.ply"
    path.write_bytes(text.encode())
    with pytest.raises(FormatError):
        read_ply(path)


def test_ppm_round_trip(tmp_path):
    img = np.random.default_rng(1).integers(0, 256, (7, 5, 3)).astype(np.uint8)
    path = tmp_path / "a.ppm"
    write_ppm(path, img)
    assert np.array_equal(read_ppm(path), img)
    assert path.read_bytes().startswith(b"P6\n5 7\n255\n")


def test_ppm_comment_and_errors(tmp_path):
    path = tmp_path / "a.ppm"
    path.write_bytes(b"P6\n# note\n1 1\n255\n\x01\x02\x03")
    assert read_ppm(path).tolist() == [[[1, 2, 3]]]
    path.write_bytes(b"P3\n1 1\n255\n1 2 3\n")
    with pytest.raises(FormatError):
        read_ppm(path)
    path.write_bytes(b"P6\n2 2\n255\n\x00")
    with pytest.raises(FormatError):
        read_ppm(path)


def test_to_uint8_rounds_and_clips():
    assert to_uint8([-3.0, 0.49, 0.5, 254.5, 300.0]).tolist() == [0, 0, 1, 255, 255]


def test_rig_round_trip(tmp_path):
    cams = rig_cameras(RigLayout(2, 3, width=40, height=30))
    path = tmp_path / "rig.txt"
    write_rig(path, cams, (2, 3))
    back, layout = read_rig(path)
    assert layout == (2, 3)
    for a, b in zip(cams, back):
        assert a.camera_id == b.camera_id and (a.width, a.height) == (b.width, b.height)
        assert np.array_equal(a.intrinsics, b.intrinsics) and np.array_equal(a.rotation, b.rotation)
        assert np.array_equal(a.translation, b.translation)


def test_rig_errors(tmp_path):
    path = tmp_path / "rig.txt"
    path.write_text("0 1 2 3\n")
    with pytest.raises(FormatError):
        read_rig(path)
    cams = rig_cameras(RigLayout(1, 2, width=8, height=8))
    write_rig(path, cams, (1, 3))
    with pytest.raises(FormatError):
        read_rig(path)


def test_image_name():
    assert image_name(7) == "view_0007.ppm"


def test_coefficients_round_trip(tmp_path):
    spec = BasisSpec(2, 2, 1)
    a = np.random.default_rng(2).normal(size=(4, 3, spec.count)) * 1e3
    path = tmp_path / "c.txt"
    write_coefficients(path, a, spec)
    back, spec2 = read_coefficients(path)
    assert np.array_equal(back, a)
    assert (spec2.order, spec2.scale_theta, spec2.scale_gamma) == (2, 2, 1)
    first = path.read_text().splitlines()[1].split()
    assert first[:2] == ["0", "0"] and len(first) == 2 + spec.count


def test_coefficients_missing_records(tmp_path):
    spec = BasisSpec(2, 1, 0)
    path = tmp_path / "c.txt"
    write_coefficients(path, np.zeros((2, 3, 2)), spec)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(FormatError):
        read_coefficients(path)
    path.write_text("no header\n")
    with pytest.raises(FormatError):
        read_coefficients(path)
