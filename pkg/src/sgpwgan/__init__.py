"""Stability lab for WGAN training dynamics with a simple gradient penalty."""

__version__ = "0.1.0"

from ._accel import backend_name, using_numba  # noqa: E402
from .errors import (  # noqa: E402
    ConfigError,
    InvalidMeasure,
    NoWeakDerivative,
    NumericalFailure,
    SGPError,
    StructureViolation,
)

__all__ = [
    "__version__",
    "backend_name",
    "using_numba",
    "ConfigError",
    "InvalidMeasure",
    "NoWeakDerivative",
    "NumericalFailure",
    "SGPError",
    "StructureViolation",
]
