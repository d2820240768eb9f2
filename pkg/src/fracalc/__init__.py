"""Fractional calculus on uniform time grids: operators, Mittag-Leffler kernels,
relaxation equations, time-fractional diffusion and an inverse source problem."""

from fracalc.errors import FracalcError
from fracalc.special import gamma_fn, mittag_leffler, ml_values
from fracalc.timegrid import (
    DistributionalSource,
    GridFunction,
    TimeGrid,
    apply_frac_derivative,
    apply_J,
    build_frac_integral,
)

__version__ = "0.1.0"

__all__ = [
    "DistributionalSource",
    "FracalcError",
    "GridFunction",
    "TimeGrid",
    "apply_J",
    "apply_frac_derivative",
    "build_frac_integral",
    "gamma_fn",
    "mittag_leffler",
    "ml_values",
]
