"""Surface light field fitting, compression and rendering for point clouds."""

from .basis import BasisSpec, DirectionParam, basis_matrix, evaluate_basis_2d
from .errors import (ConfigError, CorruptStream, InvalidArgument, NumericalFailure, OutOfBounds, SlfError,
                     UnsupportedStream)
from .fitting import FitConfig, fit_ridge, fit_smoothed, solve_slf
from .mapping import CameraModel, ObservationSet, PointCloud, build_observations
from .renderer import RenderConfig, reconstruct_color, render

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "CameraModel",
    "ConfigError",
    "CorruptStream",
    "DirectionParam",
    "FitConfig",
    "InvalidArgument",
    "NumericalFailure",
    "ObservationSet",
    "OutOfBounds",
    "PointCloud",
    "RenderConfig",
    "SlfError",
    "UnsupportedStream",
    "basis_matrix",
    "build_observations",
    "evaluate_basis_2d",
    "fit_ridge",
    "fit_smoothed",
    "reconstruct_color",
    "render",
    "solve_slf",
]
