"""Scoring reconstructions: camera splits, coned PSNR and rate-distortion sweeps.

PSNR is computed per sample rather than per image: the squared error is
averaged over every (point, evaluation camera, channel) triple whose camera
lies inside the evaluation cone ``delta_prime`` around the point normal.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .basis import BasisSpec
from .codec import decode_stream, encode_stream_with_reconstruction
from .errors import InvalidArgument, SlfError
from .fitting import FitConfig, solve_slf
from .mapping import CameraModel, ObservationSet, PointCloud, build_observations
from .renderer import reconstruct_colors

logger = logging.getLogger(__name__)

PSNR_CAP = 100.0
DELTA_PRIMES = (0.0, 10.0, 20.0, 30.0)
SPLIT_MODES = ("dense", "intermediate", "sparse")

# (circles, cameras per circle) kept as input views on the 11 x 50 reference rig
REFERENCE_RIG = (11, 50)
_REFERENCE_SPLITS = {"dense": (5, 25), "intermediate": (3, 13), "sparse": (2, 7)}
# rigs without a circle layout: every 2nd / 4th / 8th camera by id
_PROPORTIONAL_STEP = {"dense": 2, "intermediate": 4, "sparse": 8}


@dataclass(frozen=True)
class EvalConfig:
    delta_prime: float = 0.0
    split: str = "dense"
    target: str = "evaluation-set"

    def __post_init__(self):
        if not 0 <= self.delta_prime < 90:
            raise InvalidArgument(f"delta_prime must lie in [0, 90), got {self.delta_prime}")
        if self.split not in SPLIT_MODES:
            raise InvalidArgument(f"unknown split {self.split!r}")
        if self.target not in ("input-set", "evaluation-set"):
            raise InvalidArgument(f"unknown target {self.target!r}")


def _spread(count: int, total: int) -> list[int]:
    """``count`` indices spread evenly over ``range(total)``, centred in their bins."""
    return [int((j + 0.5) * total / count) for j in range(count)]


def split_indices(total: int, mode: str, layout: tuple[int, int] | None = None) -> np.ndarray:
    """Positions (into the rig's camera list) of the input cameras."""
    if mode not in SPLIT_MODES:
        raise InvalidArgument(f"unknown split {mode!r}; expected one of {', '.join(SPLIT_MODES)}")
    if layout is None:
        chosen = np.arange(0, total, _PROPORTIONAL_STEP[mode])
    else:
        circles, per_circle = layout
        if circles * per_circle != total:
            raise InvalidArgument(f"layout {circles}x{per_circle} does not match {total} cameras")
        ref_c, ref_p = _REFERENCE_SPLITS[mode]
        n_c = max(1, round(circles * ref_c / REFERENCE_RIG[0]))
        n_p = max(1, round(per_circle * ref_p / REFERENCE_RIG[1]))
        chosen = np.array([c * per_circle + j for c in _spread(n_c, circles) for j in _spread(n_p, per_circle)],
                          dtype=np.int64)
    if chosen.size == 0 or chosen.size >= total:
        raise InvalidArgument(f"a rig of {total} cameras is too small for the {mode} split")
    return chosen


def split_cameras(cameras: Sequence[CameraModel], mode: str, layout: tuple[int, int] | None = None):
    """Partition a rig into ``(input cameras, evaluation cameras)``.

    With a ``(circles, per_circle)`` layout (cameras listed circle by circle)
    whole circles and evenly spaced cameras on them are kept as input; the
    counts scale with the rig from 5x25, 3x13 and 2x7 on an 11x50 rig.
    Without a layout, cameras sorted by id are taken proportionally.
    """
    cams = list(cameras)
    if layout is None:
        order = sorted(range(len(cams)), key=lambda i: cams[i].camera_id)
        chosen = {order[i] for i in split_indices(len(cams), mode)}
    else:
        chosen = set(split_indices(len(cams), mode, layout).tolist())
    inputs = [c for i, c in enumerate(cams) if i in chosen]
    evals = [c for i, c in enumerate(cams) if i not in chosen]
    return inputs, evals


def psnr_from_mse(mse: float) -> float:
    if mse <= 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(255.0 ** 2 / mse))


def evaluation_samples(cloud: PointCloud, cameras, images, delta_prime: float,
                       threads: int = 1) -> ObservationSet:
    """Reference colors of every valid (point, camera) pair inside the ``delta_prime`` cone."""
    return build_observations(cloud, cameras, images, delta=delta_prime, threads=threads)


def sample_mse(coeffs, spec: BasisSpec, samples: ObservationSet) -> float:
    if len(samples) == 0:
        raise InvalidArgument("no valid (point, camera) pairs to evaluate")
    a = np.asarray(coeffs, dtype=float)
    if a.shape[0] != samples.point_count:
        raise InvalidArgument(f"{a.shape[0]} coefficient vectors for {samples.point_count} points")
    pred = reconstruct_colors(a[samples.point_index], spec, samples.directions)
    err = pred - samples.colors
    return float(np.mean(err * err))


def samples_psnr(coeffs, spec: BasisSpec, samples: ObservationSet) -> float:
    return psnr_from_mse(sample_mse(coeffs, spec, samples))


def slf_psnr(coeffs, spec: BasisSpec, cloud: PointCloud, cameras, images, delta_prime: float,
             threads: int = 1) -> float:
    """Coned per-sample PSNR in dB, capped at 100."""
    return samples_psnr(coeffs, spec, evaluation_samples(cloud, cameras, images, delta_prime, threads))


@dataclass(frozen=True)
class PipelineConfig:
    spec: BasisSpec = field(default_factory=BasisSpec)
    fit: FitConfig = field(default_factory=FitConfig)
    q: float = 8.0
    depth: int = 10
    delta: float = 10.0
    delta_primes: tuple[float, ...] = DELTA_PRIMES
    threads: int = 1


@dataclass(frozen=True)
class SweepRow:
    setting: str
    total_bits: int
    plane_bits: int
    psnr: tuple[float, ...]


SWEEP_PARAMETERS = ("q", "n", "depth")


def _apply(config: PipelineConfig, parameter: str, value) -> PipelineConfig:
    if parameter == "q":
        return replace(config, q=float(value))
    if parameter == "depth":
        return replace(config, depth=int(value))
    if parameter == "n":
        return replace(config, spec=BasisSpec.from_count(int(value), config.spec.order))
    raise InvalidArgument(f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS}")


class Pipeline:
    """Fit, code and score one scene; observation sets and fits are cached."""

    def __init__(self, cloud: PointCloud, input_cameras, input_images, eval_cameras, eval_images):
        self.cloud = cloud
        self.inputs = (list(input_cameras), list(input_images))
        self.evals = (list(eval_cameras), list(eval_images))
        self._obs: dict[float, ObservationSet] = {}
        self._eval: dict[float, ObservationSet] = {}
        self._fits: dict[tuple, np.ndarray] = {}

    def observations(self, delta: float, threads: int = 1) -> ObservationSet:
        if delta not in self._obs:
            self._obs[delta] = build_observations(self.cloud, *self.inputs, delta=delta, threads=threads)
        return self._obs[delta]

    def eval_samples(self, delta_prime: float, threads: int = 1) -> ObservationSet:
        if delta_prime not in self._eval:
            self._eval[delta_prime] = evaluation_samples(self.cloud, *self.evals, delta_prime, threads)
        return self._eval[delta_prime]

    def fit(self, config: PipelineConfig) -> np.ndarray:
        key = (config.spec, config.fit, config.delta)
        if key not in self._fits:
            obs = self.observations(config.delta, config.threads)
            self._fits[key] = solve_slf(obs, self.cloud, config.spec, config.fit, threads=config.threads)
        return self._fits[key]

    def score(self, coeffs, config: PipelineConfig) -> tuple[float, ...]:
        return tuple(samples_psnr(coeffs, config.spec, self.eval_samples(d, config.threads))
                     for d in config.delta_primes)

    def run(self, config: PipelineConfig, setting: str = "") -> SweepRow:
        """Encode, decode from bytes and score the decoded coefficients."""
        coeffs = self.fit(config)
        stream, vox, _ = encode_stream_with_reconstruction(self.cloud.positions, coeffs, config.spec,
                                                           config.q, config.depth)
        _, decoded = decode_stream(stream.to_bytes())
        per_point = decoded[vox.point_map]
        return SweepRow(setting, stream.total_bits, stream.plane_bits, self.score(per_point, config))


def rd_sweep(pipeline: Pipeline, config: PipelineConfig, parameter: str, values) -> list[SweepRow]:
    """One row per value of ``parameter`` (``q``, ``n`` or ``depth``)."""
    rows = []
    for value in values:
        setting = f"{parameter}={value:g}"
        try:
            row = pipeline.run(_apply(config, parameter, value), setting)
        except SlfError as exc:
            raise type(exc)(f"{setting}: {exc}") from exc
        logger.info("%s: %d bits, psnr %s", setting, row.total_bits,
                    ", ".join(f"{p:.2f}" for p in row.psnr))
        rows.append(row)
    return rows


def sweep_header(delta_primes=DELTA_PRIMES) -> list[str]:
    return ["setting", "total_bits"] + [f"psnr_d{d:g}" for d in delta_primes]


def write_sweep_csv(fh, rows: Sequence[SweepRow], delta_primes=DELTA_PRIMES) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(sweep_header(delta_primes))
    for row in rows:
        writer.writerow([row.setting, row.total_bits] + [f"{p:.6f}" for p in row.psnr])
