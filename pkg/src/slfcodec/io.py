"""File formats: PLY point clouds, binary PPM images, camera rigs, coefficient dumps."""

from __future__ import annotations

import re
from pathlib import Path
from typing import Sequence

import numpy as np

from .basis import BasisSpec
from .errors import ConfigError, InvalidArgument
from .mapping import CameraModel, PointCloud

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class FormatError(ConfigError):
    category = "format-error"


def _read_ply_header(fh):
    if fh.readline().strip() != b"ply":
        raise FormatError("missing 'ply' magic")
    fmt = None
    elements = []
    while True:
        line = fh.readline()
        if not line:
            raise FormatError("unterminated PLY header")
        tokens = line.decode("ascii", "replace").split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "end_header":
            break
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise FormatError("property before element")
            if tokens[1] == "list":
                elements[-1][2].append((tokens[4], ("list", tokens[2], tokens[3])))
            else:
                if tokens[1] not in _PLY_TYPES:
                    raise FormatError(f"unknown PLY type {tokens[1]!r}")
                elements[-1][2].append((tokens[2], _PLY_TYPES[tokens[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise FormatError(f"unsupported PLY format {fmt!r}")
    return fmt, elements


def read_ply(path) -> PointCloud:
    """Read the vertex element of an ascii or little-endian binary PLY.

    Normals are taken from ``nx, ny, nz`` when present; other scalar vertex
    properties become attributes.
    """
    path = Path(path)
    with path.open("rb") as fh:
        fmt, elements = _read_ply_header(fh)
        body = fh.read()
    names = [e[0] for e in elements]
    if "vertex" not in names:
        raise FormatError(f"{path}: no vertex element")
    vi = names.index("vertex")
    _, count, props = elements[vi]
    if any(isinstance(t, tuple) for _, t in props):
        raise FormatError(f"{path}: list properties on vertices are not supported")
    if fmt == "ascii":
        lines = body.decode("ascii").splitlines()
        skip = sum(e[1] for e in elements[:vi])
        rows = [ln.split() for ln in lines[skip:skip + count]]
        if len(rows) < count:
            raise FormatError(f"{path}: expected {count} vertices")
        table = np.array(rows, dtype=float).reshape(count, len(props))
        cols = {name: table[:, j] for j, (name, _) in enumerate(props)}
    else:
        if vi != 0 and any(isinstance(t, tuple) for e in elements[:vi] for _, t in e[2]):
            raise FormatError(f"{path}: cannot skip list elements before vertices")
        offset = sum(e[1] * np.dtype([(n, "<" + t) for n, t in e[2]]).itemsize for e in elements[:vi])
        dtype = np.dtype([(name, "<" + t) for name, t in props])
        if len(body) < offset + count * dtype.itemsize:
            raise FormatError(f"{path}: vertex data truncated")
        data = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
        cols = {name: data[name].astype(float) for name, _ in props}
    for axis in "xyz":
        if axis not in cols:
            raise FormatError(f"{path}: vertex property {axis!r} missing")
    positions = np.stack([cols.pop("x"), cols.pop("y"), cols.pop("z")], axis=1)
    normals = None
    if all(k in cols for k in ("nx", "ny", "nz")):
        normals = np.stack([cols.pop("nx"), cols.pop("ny"), cols.pop("nz")], axis=1)
    return PointCloud(positions, normals, cols)


def write_ply(path, cloud: PointCloud, binary: bool = True) -> None:
    """Write positions (and normals) as doubles so values round-trip exactly."""
    names = ["x", "y", "z"]
    cols = [cloud.positions]
    if cloud.normals is not None:
        names += ["nx", "ny", "nz"]
        cols.append(cloud.normals)
    table = np.concatenate(cols, axis=1) if cols else np.zeros((0, 3))
    header = ["ply", "format binary_little_endian 1.0" if binary else "format ascii 1.0",
              f"element vertex {len(cloud)}"]
    header += [f"property double {n}" for n in names]
    header.append("end_header")
    with Path(path).open("wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(np.ascontiguousarray(table, dtype="<f8").tobytes())
        else:
            for row in table:
                fh.write((" ".join(repr(float(v)) for v in row) + "\n").encode("ascii"))


def read_ppm(path) -> np.ndarray:
    """Binary PPM (P6, maxval 255) as a ``(H, W, 3)`` uint8 array."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)").match(data, pos)
        if m is None:
            raise FormatError(f"{path}: malformed PPM header")
        tokens.append(m.group(2))
        pos = m.end()
    if tokens[0] != b"P6":
        raise FormatError(f"{path}: only binary P6 PPM is supported")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError(f"{path}: maxval must be 255")
    pos += 1
    need = width * height * 3
    if len(data) - pos < need:
        raise FormatError(f"{path}: pixel data truncated")
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(height, width, 3).copy()


def to_uint8(image) -> np.ndarray:
    return np.clip(np.floor(np.asarray(image, dtype=float) + 0.5), 0, 255).astype(np.uint8)


def write_ppm(path, image) -> None:
    img = to_uint8(image)
    h, w = img.shape[:2]
    with Path(path).open("wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def write_rig(path, cameras: Sequence[CameraModel], layout: tuple[int, int] | None = None) -> None:
    """One camera per line: id, K (9, row-major), R (9), t (3), width, height."""
    lines = ["# slfcodec camera rig: id K[9] R[9] t[3] width height"]
    if layout is not None:
        lines.append(f"# layout circles={layout[0]} per_circle={layout[1]}")
    for cam in cameras:
        vals = [repr(float(x)) for x in np.concatenate([cam.intrinsics.ravel(), cam.rotation.ravel(),
                                                          cam.translation])]
        lines.append(" ".join([str(cam.camera_id)] + vals + [str(cam.width), str(cam.height)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_rig(path) -> tuple[list[CameraModel], tuple[int, int] | None]:
    """Cameras and the optional ``(circles, per_circle)`` layout."""
    cameras = []
    layout = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            m = re.match(r"#\s*layout\s+circles=(\d+)\s+per_circle=(\d+)", text)
            if m:
                layout = (int(m.group(1)), int(m.group(2)))
            continue
        parts = text.split()
        if len(parts) != 24:
            raise FormatError(f"{path}:{lineno}: expected 24 fields, got {len(parts)}")
        try:
            nums = [float(x) for x in parts[1:22]]
            cam = CameraModel(np.array(nums[0:9]), np.array(nums[9:18]), np.array(nums[18:21]),
                              int(parts[22]), int(parts[23]), int(parts[0]))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        cameras.append(cam)
    if layout is not None and layout[0] * layout[1] != len(cameras):
        raise FormatError(f"{path}: layout {layout} does not match {len(cameras)} cameras")
    return cameras, layout


def image_name(camera_id: int) -> str:
    return f"view_{camera_id:04d}.ppm"


def write_coefficients(path, coeffs: np.ndarray, spec: BasisSpec) -> None:
    """Line-oriented dump: ``point channel a_0 ... a_{N-1}`` per record."""
    a = np.asarray(coeffs, dtype=float)
    points, channels, count = a.shape
    with Path(path).open("w") as fh:
        fh.write(f"# slf-coefficients points={points} channels={channels} order={spec.order} "
                 f"scale_theta={spec.scale_theta} scale_gamma={spec.scale_gamma}\n")
        for p in range(points):
            for ch in range(channels):
                fh.write(f"{p} {ch} " + " ".join(repr(float(x)) for x in a[p, ch]) + "\n")


def read_coefficients(path) -> tuple[np.ndarray, BasisSpec]:
    with Path(path).open() as fh:
        head = fh.readline()
        m = re.match(r"#\s*slf-coefficients\s+(.*)", head)
        if not m:
            raise FormatError(f"{path}: missing coefficient header")
        fields = dict(kv.split("=") for kv in m.group(1).split())
        try:
            points, channels = int(fields["points"]), int(fields["channels"])
            spec = BasisSpec(int(fields["order"]), int(fields["scale_theta"]), int(fields["scale_gamma"]),
                             strict=False)
        except (KeyError, ValueError, InvalidArgument) as exc:
            raise FormatError(f"{path}: bad coefficient header ({exc})") from None
        a = np.full((points, channels, spec.count), np.nan)
        for lineno, line in enumerate(fh, 2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2 + spec.count:
                raise FormatError(f"{path}:{lineno}: expected {2 + spec.count} fields")
            a[int(parts[0]), int(parts[1])] = [float(x) for x in parts[2:]]
    if np.isnan(a).any():
        raise FormatError(f"{path}: missing coefficient records")
    return a, spec
