"""Periodic separable B-spline wavelet basis over viewing directions.

A viewing direction is parameterized by azimuth ``theta`` in [-pi, pi] and
``gamma = sin(elevation)`` in [-1, 1]; equal areas in the (theta, gamma)
rectangle are equal areas on the sphere.  Both coordinates are shifted onto
the unit period [0, 1) and expanded in a 1D multiresolution family:

* member 0 is the constant (scaling) function,
* members ``2**t .. 2**(t+1) - 1`` are the ``2**t`` translates of the
  periodized order-``o`` B-spline wavelet at level ``t``.

Each member is normalized to unit L2 norm on [0, 1).  The 2D basis is the
tensor product, with the theta index varying fastest.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "BasisSpec",
    "DirectionParam",
    "cardinal_bspline",
    "mother_wavelet",
    "periodic_basis_1d",
    "periodic_family_1d",
    "evaluate_basis_2d",
    "basis_matrix",
    "direction_to_unit",
]


class DirectionParam(NamedTuple):
    theta: float
    gamma: float


@dataclass(frozen=True)
class BasisSpec:
    """Wavelet order and the two scales; ``count`` is derived.

    The theta scale must exceed the gamma scale by one unless ``strict`` is
    turned off (needed for counts such as N=1 that are not odd powers of 2).
    """

    order: int = 2
    scale_theta: int = 4
    scale_gamma: int = 3
    strict: bool = True

    def __post_init__(self):
        if self.order < 1:
            raise InvalidArgument(f"wavelet order must be >= 1, got {self.order}")
        if self.scale_theta < 0 or self.scale_gamma < 0:
            raise InvalidArgument("scales must be non-negative")
        if self.scale_theta + self.scale_gamma > 24:
            raise InvalidArgument("basis too large")
        if self.strict and self.scale_theta != self.scale_gamma + 1:
            raise InvalidArgument(
                f"scale_theta must equal scale_gamma + 1 "
                f"(got {self.scale_theta}, {self.scale_gamma}); pass strict=False to override"
            )

    @property
    def count(self) -> int:
        return 1 << (self.scale_theta + self.scale_gamma)

    @property
    def count_theta(self) -> int:
        return 1 << self.scale_theta

    @property
    def count_gamma(self) -> int:
        return 1 << self.scale_gamma

    @classmethod
    def from_count(cls, count: int, order: int = 2) -> "BasisSpec":
        """Smallest-aspect spec with ``count`` members (theta scale >= gamma scale)."""
        if count < 1 or count & (count - 1):
            raise InvalidArgument(f"basis count must be a power of two, got {count}")
        total = count.bit_length() - 1
        s0 = (total + 1) // 2
        s1 = total - s0
        return cls(order, s0, s1, strict=(s0 == s1 + 1))


def cardinal_bspline(order: int, x):
    """Cardinal B-spline ``N_order(x)`` supported on [0, order].

    ``N_1`` is the indicator of [0, 1); higher orders follow the Cox-de Boor
    recursion.  Accepts scalars or arrays.
    """
    if order < 1:
        raise InvalidArgument(f"B-spline order must be >= 1, got {order}")
    x = np.asarray(x, dtype=float)
    # shifted[j] holds N_k(x - j) for the current k
    shifted = [((x - j >= 0.0) & (x - j < 1.0)).astype(float) for j in range(order)]
    for k in range(2, order + 1):
        nxt = []
        for j in range(order - k + 1):
            y = x - j
            nxt.append((y * shifted[j] + (k - y) * shifted[j + 1]) / (k - 1))
        shifted = nxt
    out = shifted[0]
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=None)
def _wavelet_filter(order: int) -> tuple[float, ...]:
    scale = 2.0 ** (order - 1)
    q = []
    for n in range(3 * order - 1):
        acc = sum(comb(order, j) * cardinal_bspline(2 * order, n - j + 1) for j in range(order + 1))
        q.append((-1) ** n * acc / scale)
    return tuple(q)


def mother_wavelet(order: int, x):
    """B-spline wavelet ``psi_order(x)``, a finite sum of dilated B-splines.

    Supported on [0, 2*order - 1]; order 1 is the Haar wavelet.
    """
    if order < 1:
        raise InvalidArgument(f"wavelet order must be >= 1, got {order}")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for n, qn in enumerate(_wavelet_filter(order)):
        out = out + qn * cardinal_bspline(order, 2.0 * x - n)
    return float(out) if out.ndim == 0 else out


def _periodized_wavelet(order: int, level: int, shift: int, u: np.ndarray) -> np.ndarray:
    period = 1 << level
    y = period * u - shift
    out = np.zeros_like(y)
    # psi vanishes below 0, so only m >= 0 copies can reach [0, 2o-1]
    for m in range((2 * order - 1 + shift) // period + 1):
        out = out + mother_wavelet(order, y + m * period)
    return out


@lru_cache(maxsize=None)
def _level_norm(order: int, level: int) -> float:
    # The periodized wavelet is a piecewise polynomial of degree order-1 with
    # knots at multiples of 2**-(level+1); Gauss-Legendre per piece is exact.
    pieces = 1 << (level + 1)
    nodes, weights = np.polynomial.legendre.leggauss(order + 2)
    left = np.arange(pieces)[:, None] / pieces
    u = (left + (nodes[None, :] + 1.0) / (2.0 * pieces)).ravel()
    w = np.tile(weights / (2.0 * pieces), pieces)
    vals = _periodized_wavelet(order, level, 0, u)
    return float(np.sqrt(np.sum(w * vals * vals)))


def _check_index(scale: int, index: int) -> None:
    if scale < 0:
        raise InvalidArgument(f"scale must be >= 0, got {scale}")
    if not 0 <= index < (1 << scale):
        raise InvalidArgument(f"index {index} outside [0, {1 << scale})")


def _member(order: int, index: int, u: np.ndarray) -> np.ndarray:
    if index == 0:
        return np.ones_like(u)
    level = index.bit_length() - 1
    shift = index - (1 << level)
    return _periodized_wavelet(order, level, shift, u) / _level_norm(order, level)


def periodic_basis_1d(order: int, scale: int, index: int, x):
    """Member ``index`` of the period-1 family of size ``2**scale`` at ``x``.

    ``x`` is reduced modulo 1 first.  Every member has unit L2 norm on [0, 1).
    """
    if order < 1:
        raise InvalidArgument(f"wavelet order must be >= 1, got {order}")
    _check_index(scale, index)
    u = np.mod(np.asarray(x, dtype=float), 1.0)
    out = _member(order, index, u)
    return float(out) if out.ndim == 0 else out


def periodic_family_1d(order: int, scale: int, x) -> np.ndarray:
    """All ``2**scale`` members at each sample: shape ``(len(x), 2**scale)``."""
    u = np.mod(np.atleast_1d(np.asarray(x, dtype=float)), 1.0)
    return np.stack([_member(order, i, u) for i in range(1 << scale)], axis=-1)


def _theta_coord(theta):
    return np.mod((np.asarray(theta, dtype=float) + np.pi) / (2.0 * np.pi), 1.0)


def _gamma_coord(gamma):
    return np.mod((np.asarray(gamma, dtype=float) + 1.0) / 2.0, 1.0)


def evaluate_basis_2d(spec: BasisSpec, direction, i: int):
    """``g_i(theta, gamma)``: product of a theta member and a gamma member.

    ``direction`` is a ``(theta, gamma)`` pair (scalars or arrays).
    ``i0 = i mod 2**s0`` indexes the theta factor and ``i1 = i // 2**s0`` the
    gamma factor.
    """
    if not 0 <= i < spec.count:
        raise InvalidArgument(f"basis index {i} outside [0, {spec.count})")
    theta, gamma = direction
    i0, i1 = i % spec.count_theta, i // spec.count_theta
    a = _member(spec.order, i0, _theta_coord(theta))
    b = _member(spec.order, i1, _gamma_coord(gamma))
    out = a * b
    return float(out) if np.ndim(out) == 0 else out


def basis_matrix(spec: BasisSpec, directions) -> np.ndarray:
    """Observation matrix ``G`` with ``G[j, i] = g_i(directions[j])``.

    ``directions`` is an ``(M, 2)`` array of (theta, gamma) rows; the result
    has shape ``(M, spec.count)`` and ``M`` may be zero.
    """
    d = np.asarray(directions, dtype=float)
    if d.size == 0:
        return np.zeros((0, spec.count))
    if d.ndim != 2 or d.shape[1] != 2:
        raise InvalidArgument(f"directions must have shape (M, 2), got {d.shape}")
    theta, gamma = d[:, 0], d[:, 1]
    m = d.shape[0]
    wt = periodic_family_1d(spec.order, spec.scale_theta, _theta_coord(theta))
    wg = periodic_family_1d(spec.order, spec.scale_gamma, _gamma_coord(gamma))
    return (wg[:, :, None] * wt[:, None, :]).reshape(m, spec.count)


def direction_to_unit(theta, gamma) -> np.ndarray:
    """Inverse parameterization: unit vectors for (theta, gamma) pairs."""
    theta = np.asarray(theta, dtype=float)
    gamma = np.clip(np.asarray(gamma, dtype=float), -1.0, 1.0)
    r = np.sqrt(1.0 - gamma * gamma)
    return np.stack([r * np.cos(theta), r * np.sin(theta), gamma], axis=-1)
