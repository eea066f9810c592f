"""Command-line front end: ``slfc <command> ...``.

Every failure exits nonzero after printing one line to stderr of the form
``error: <category>: <message>``.
"""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .basis import BasisSpec
from .codec import SlfBitstream, decode_stream, encode_stream, voxelize
from .errors import ConfigError, InvalidArgument, SlfError
from .evaluation import (DELTA_PRIMES, SPLIT_MODES, SWEEP_PARAMETERS, Pipeline, PipelineConfig,
                         evaluation_samples, rd_sweep, sample_mse, psnr_from_mse, split_cameras,
                         write_sweep_csv)
from .fitting import FitConfig, solve_slf
from .mapping import CameraModel, PointCloud, build_observations, estimate_normals
from .renderer import RenderConfig, render
from .synthetic import SyntheticScene, synth_scene

logger = logging.getLogger("slfcodec")

CLOUD_FILE = "cloud.ply"
RIG_FILE = "rig.txt"
IMAGE_DIR = "images"
SCENE_FILE = "scene.json"
DEFAULT_SIZE = 256


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# -- shared option groups -------------------------------------------------

def _add_basis(p):
    g = p.add_argument_group("basis")
    g.add_argument("--order", type=int, default=2, help="B-spline order o (default 2)")
    g.add_argument("--scale-theta", type=int, default=4, help="theta scale s0 (default 4)")
    g.add_argument("--scale-gamma", type=int, default=3, help="gamma scale s1 (default 3)")
    g.add_argument("--no-strict-scales", action="store_true", help="allow s0 != s1 + 1")


def _add_fit(p):
    g = p.add_argument_group("fitting")
    g.add_argument("--lambda", dest="lam", type=float, default=0.8, help="ridge weight (default 0.8)")
    g.add_argument("--beta", type=float, default=1.3, help="neighbour smoothing weight (default 1.3)")
    g.add_argument("--iters", type=int, default=10, help="smoothing sweeps T; 0 gives ridge only (default 10)")
    g.add_argument("--neighbors", type=int, default=8, help="neighbours averaged per point (default 8)")
    g.add_argument("--delta", type=float, default=10.0, help="validity cone angle in degrees (default 10)")
    g.add_argument("--estimate-normals", type=int, metavar="K", default=None,
                   help="estimate missing normals from K nearest neighbours")


def _add_split(p, target=False):
    p.add_argument("--split", choices=SPLIT_MODES, default=None,
                   help="use only the input cameras of this split")
    if target:
        p.add_argument("--target", choices=("input-set", "evaluation-set"), default="evaluation-set",
                       help="camera subset scored when --split is given")


def _add_common(p):
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    p.add_argument("--seed", type=int, default=None, help="seed for stochastic choices")


def _spec(args) -> BasisSpec:
    return BasisSpec(args.order, args.scale_theta, args.scale_gamma, strict=not args.no_strict_scales)


def _fit_config(args) -> FitConfig:
    return FitConfig(lam=args.lam, beta=args.beta, max_iters=args.iters, neighbors=args.neighbors)


# -- path checks and atomic output ---------------------------------------

def _need_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InvalidArgument(f"no such file: {p}")
    return p


def _need_dir(path) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise InvalidArgument(f"no such directory: {p}")
    return p


def _out_path(path) -> Path:
    p = Path(path)
    if not p.parent.is_dir():
        raise InvalidArgument(f"output directory does not exist: {p.parent}")
    return p


def _atomic(path: Path, write) -> None:
    """Write through ``write(tmp_path)`` and move into place only on success."""
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


# -- scene loading ---------------------------------------------------------

def _load_cloud(path, estimate_k=None) -> PointCloud:
    cloud = io.read_ply(path)
    if cloud.normals is None and estimate_k is not None:
        cloud = PointCloud(cloud.positions, estimate_normals(cloud.positions, estimate_k), cloud.attributes)
    return cloud


def _load_views(rig_path, images_dir):
    cameras, layout = io.read_rig(rig_path)
    images = []
    for cam in cameras:
        path = Path(images_dir) / io.image_name(cam.camera_id)
        if not path.is_file():
            raise InvalidArgument(f"missing image for camera {cam.camera_id}: {path}")
        images.append(path)
    return cameras, images, layout


def _read_images(paths):
    return [io.read_ppm(p) for p in paths]


def _subset(cameras, images, layout, split, target="input-set"):
    if split is None:
        return cameras, images
    inputs, evals = split_cameras(cameras, split, layout)
    chosen = {c.camera_id for c in (inputs if target == "input-set" else evals)}
    pairs = [(c, im) for c, im in zip(cameras, images) if c.camera_id in chosen]
    return [c for c, _ in pairs], [im for _, im in pairs]


def _coefficients_for_cloud(source: Path, cloud: PointCloud):
    """Per-point coefficients from a coefficient file or a ``.slf`` stream."""
    if source.suffix == ".slf":
        stream = SlfBitstream.from_bytes(source.read_bytes())
        vox, coeffs = decode_stream(stream)
        mine, _ = voxelize(cloud.positions, stream.depth)
        if not np.array_equal(mine.coords, vox.coords):
            raise InvalidArgument("stream geometry does not match the point cloud")
        return coeffs[mine.point_map], stream.spec
    coeffs, spec = io.read_coefficients(source)
    if coeffs.shape[0] != len(cloud):
        raise InvalidArgument(f"{coeffs.shape[0]} coefficient records for {len(cloud)} points")
    return coeffs, spec


# -- commands --------------------------------------------------------------

def cmd_synth(args):
    spec_path = _need_file(args.spec)
    out = Path(args.out_dir)
    if not out.parent.is_dir():
        raise InvalidArgument(f"output directory does not exist: {out.parent}")
    if out.exists() and any(out.iterdir()) and not args.force:
        raise InvalidArgument(f"{out} exists and is not empty (use --force to replace it)")
    scene = SyntheticScene.load(spec_path)
    if args.seed is not None:
        scene = replace(scene, seed=args.seed)
    data = synth_scene(scene)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        io.write_ply(tmp / CLOUD_FILE, data.cloud)
        io.write_rig(tmp / RIG_FILE, data.cameras, data.layout)
        (tmp / IMAGE_DIR).mkdir()
        for cam, img in zip(data.cameras, data.images):
            io.write_ppm(tmp / IMAGE_DIR / io.image_name(cam.camera_id), img)
        (tmp / SCENE_FILE).write_text(scene.to_json() + "\n")
        if out.exists():
            shutil.rmtree(out)
        os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    print(f"{out}: {len(data.cloud)} points, {len(data.cameras)} cameras")


def cmd_fit(args):
    cloud_path, rig_path = _need_file(args.cloud), _need_file(args.rig)
    images_dir = _need_dir(args.images)
    out = _out_path(args.output)
    spec, cfg = _spec(args), _fit_config(args)
    cloud = _load_cloud(cloud_path, args.estimate_normals)
    if cloud.normals is None:
        raise InvalidArgument("point cloud has no normals; pass --estimate-normals K to estimate them")
    cameras, paths, layout = _load_views(rig_path, images_dir)
    cameras, paths = _subset(cameras, paths, layout, args.split)
    obs = build_observations(cloud, cameras, _read_images(paths), delta=args.delta, threads=args.threads)
    logger.info("%d observations from %d cameras", len(obs), len(cameras))
    coeffs = solve_slf(obs, cloud, spec, cfg, threads=args.threads)
    _atomic(out, lambda tmp: io.write_coefficients(tmp, coeffs, spec))
    print(f"{out}: {len(cloud)} points, N={spec.count}")


def cmd_encode(args):
    cloud_path, coeff_path = _need_file(args.cloud), _need_file(args.coeffs)
    out = _out_path(args.output)
    cloud = io.read_ply(cloud_path)
    coeffs, spec = io.read_coefficients(coeff_path)
    if coeffs.shape[0] != len(cloud):
        raise InvalidArgument(f"{coeffs.shape[0]} coefficient records for {len(cloud)} points")
    stream = encode_stream(cloud.positions, coeffs, spec, args.q, args.depth)
    data = stream.to_bytes()
    _atomic(out, lambda tmp: Path(tmp).write_bytes(data))
    print(f"{out}: {stream.total_bits} bits ({stream.point_count} voxels)")


def cmd_decode(args):
    src = _need_file(args.stream)
    cloud_out, coeff_out = _out_path(args.cloud), _out_path(args.coeffs)
    stream = SlfBitstream.from_bytes(src.read_bytes())
    vox, coeffs = decode_stream(stream)
    _atomic(cloud_out, lambda tmp: io.write_ply(tmp, PointCloud(vox.positions())))
    _atomic(coeff_out, lambda tmp: io.write_coefficients(tmp, coeffs, stream.spec))
    print(f"{cloud_out}, {coeff_out}: {len(vox)} voxels")


def _render_camera(args) -> CameraModel:
    if args.rig is not None:
        cameras, _ = io.read_rig(_need_file(args.rig))
        for cam in cameras:
            if cam.camera_id == args.camera_id:
                return cam
        raise InvalidArgument(f"camera id {args.camera_id} not in {args.rig}")
    if args.eye is None:
        raise InvalidArgument("give a camera with --rig/--camera-id or --eye")
    return CameraModel.look_at(args.eye, args.target, width=args.width or DEFAULT_SIZE,
                               height=args.height or DEFAULT_SIZE, focal=args.focal)


def cmd_render(args):
    src = _need_file(args.source)
    out = _out_path(args.output)
    if args.rig is not None and args.camera_id is None:
        raise InvalidArgument("--rig needs --camera-id")
    if src.suffix == ".slf":
        vox, coeffs = decode_stream(src.read_bytes())
        positions, spec = vox.positions(), SlfBitstream.from_bytes(src.read_bytes()).spec
    else:
        if args.cloud is None:
            raise InvalidArgument("rendering a coefficient file needs --cloud")
        cloud = io.read_ply(_need_file(args.cloud))
        coeffs, spec = io.read_coefficients(src)
        if coeffs.shape[0] != len(cloud):
            raise InvalidArgument(f"{coeffs.shape[0]} coefficient records for {len(cloud)} points")
        positions = cloud.positions
    cam = _render_camera(args)
    cfg = RenderConfig(args.width or cam.width, args.height or cam.height, args.splat_radius)
    image = render(positions, coeffs, spec, cam, cfg)
    _atomic(out, lambda tmp: io.write_ppm(tmp, image))
    print(f"{out}: {cfg.width}x{cfg.height}")


def cmd_eval(args):
    cloud_path, source = _need_file(args.cloud), _need_file(args.coeffs)
    rig_path, images_dir = _need_file(args.rig), _need_dir(args.images)
    cloud = _load_cloud(cloud_path, args.estimate_normals)
    if cloud.normals is None:
        raise InvalidArgument("point cloud has no normals; pass --estimate-normals K to estimate them")
    coeffs, spec = _coefficients_for_cloud(source, cloud)
    cameras, paths, layout = _load_views(rig_path, images_dir)
    cameras, paths = _subset(cameras, paths, layout, args.split, args.target)
    images = _read_images(paths)
    rows = []
    for dp in args.delta_prime:
        samples = evaluation_samples(cloud, cameras, images, dp, args.threads)
        rows.append((dp, len(samples), psnr_from_mse(sample_mse(coeffs, spec, samples))))
    lines = ["delta_prime,samples,psnr"] + [f"{dp:g},{n},{p:.6f}" for dp, n, p in rows]
    text = "\n".join(lines) + "\n"
    if args.output:
        out = _out_path(args.output)
        _atomic(out, lambda tmp: Path(tmp).write_text(text))
    sys.stdout.write(text)


def cmd_rd_sweep(args):
    cloud_path, rig_path = _need_file(args.cloud), _need_file(args.rig)
    images_dir = _need_dir(args.images)
    out = _out_path(args.output) if args.output else None
    cloud = _load_cloud(cloud_path, args.estimate_normals)
    if cloud.normals is None:
        raise InvalidArgument("point cloud has no normals; pass --estimate-normals K to estimate them")
    cameras, paths, layout = _load_views(rig_path, images_dir)
    inputs, evals = split_cameras(cameras, args.split, layout)
    by_id = {c.camera_id: p for c, p in zip(cameras, paths)}
    pipeline = Pipeline(cloud, inputs, _read_images([by_id[c.camera_id] for c in inputs]),
                        evals, _read_images([by_id[c.camera_id] for c in evals]))
    config = PipelineConfig(_spec(args), _fit_config(args), args.q, args.depth, args.delta,
                            tuple(args.delta_prime), args.threads)
    rows = rd_sweep(pipeline, config, args.param, args.values)
    if out is not None:
        def write(tmp):
            with open(tmp, "w", newline="") as fh:
                write_sweep_csv(fh, rows, config.delta_primes)
        _atomic(out, write)
    write_sweep_csv(sys.stdout, rows, config.delta_primes)


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slfc", description="Surface light field fitting, coding and rendering.")
    parser.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic scene: cloud, rig and ground-truth images")
    p.add_argument("spec", help="scene description (JSON)")
    p.add_argument("out_dir")
    p.add_argument("--force", action="store_true", help="replace a non-empty output directory")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit view-map coefficients from posed images")
    p.add_argument("cloud")
    p.add_argument("rig")
    p.add_argument("images", help="directory of view_NNNN.ppm images")
    p.add_argument("-o", "--output", required=True)
    _add_basis(p)
    _add_fit(p)
    _add_split(p)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("encode", help="compress geometry and coefficients into a .slf stream")
    p.add_argument("cloud")
    p.add_argument("coeffs")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--q", type=float, default=8.0, help="quantization step (default 8)")
    p.add_argument("--depth", type=int, default=10, help="octree depth D (default 10)")
    _add_common(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a .slf stream to a cloud and coefficients")
    p.add_argument("stream")
    p.add_argument("--cloud", required=True, help="output PLY of voxel centres")
    p.add_argument("--coeffs", required=True, help="output coefficient file")
    _add_common(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("render", help="render a view from a .slf stream or a coefficient file")
    p.add_argument("source", help=".slf stream or coefficient file")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--cloud", help="point cloud for a coefficient file")
    p.add_argument("--rig", help="rig file to take the camera from")
    p.add_argument("--camera-id", type=int)
    p.add_argument("--eye", type=float, nargs=3)
    p.add_argument("--target", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    p.add_argument("--focal", type=float, default=300.0)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--splat-radius", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="coned PSNR of coefficients against posed images")
    p.add_argument("cloud")
    p.add_argument("coeffs", help="coefficient file or .slf stream")
    p.add_argument("rig")
    p.add_argument("images")
    p.add_argument("--delta-prime", type=float, nargs="+", default=list(DELTA_PRIMES))
    p.add_argument("-o", "--output")
    p.add_argument("--estimate-normals", type=int, metavar="K", default=None)
    _add_split(p, target=True)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rd-sweep", help="fit, code and score over a list of Q, N or D values")
    p.add_argument("cloud")
    p.add_argument("rig")
    p.add_argument("images")
    p.add_argument("--param", choices=SWEEP_PARAMETERS, default="q")
    p.add_argument("--values", nargs="+", required=True, type=float)
    p.add_argument("--q", type=float, default=8.0)
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--delta-prime", type=float, nargs="+", default=list(DELTA_PRIMES))
    p.add_argument("--split", choices=SPLIT_MODES, default="dense")
    p.add_argument("-o", "--output")
    _add_basis(p)
    _add_fit(p)
    _add_common(p)
    p.set_defaults(func=cmd_rd_sweep)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "param", "q") != "q":
            if any(v != int(v) for v in args.values):
                raise ConfigError(f"{args.param} values must be integers", "values")
            args.values = [int(v) for v in args.values]
        args.func(args)
    except SlfError as exc:
        print(f"error: {exc.category}: {_one_line(exc)}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io-error: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
