"""Physics-informed PointNet with Jacobi-polynomial KAN layers for natural convection."""

from .jacobi import CHEBYSHEV_FIRST, LEGENDRE, JacobiParams, eval_basis
from .network import NetworkConfig, build, load_checkpoint, save_checkpoint, total_param_count
from .physics import FluidParams, dimensionless
from .trainer import TrainConfig, error_table, train

__version__ = "0.1.0"

__all__ = [
    "CHEBYSHEV_FIRST",
    "LEGENDRE",
    "JacobiParams",
    "eval_basis",
    "NetworkConfig",
    "build",
    "load_checkpoint",
    "save_checkpoint",
    "total_param_count",
    "FluidParams",
    "dimensionless",
    "TrainConfig",
    "error_table",
    "train",
]
