"""Spectral Galerkin simulator for time-fractional SPDEs on the torus.

The model is D_t^beta u = [-(-Laplace)^s u + zeta(u) + b Laplace u] dt plus
multiplicative transport noise built from divergence-free Fourier vector
fields, with a smooth H^-gamma cut-off regularizing the nonlinearity.  The
package provides the fractional-calculus primitives, the spectral field
algebra, the noise construction, the Volterra time stepper, and Monte-Carlo
experiments around blow-up delay.
"""

__version__ = "0.1.0"

from .dynamics import SimConfig, TrajectoryRecord, integrate
from .errors import (
    FracSpdeError,
    InvalidInputError,
    InvalidParameterError,
    OutOfRangeError,
    ShapeError,
)
from .fractional import mittag_leffler, solve_caputo_scalar_ode
from .spectral import SpectralField

__all__ = [
    "__version__",
    "SimConfig",
    "TrajectoryRecord",
    "integrate",
    "SpectralField",
    "mittag_leffler",
    "solve_caputo_scalar_ode",
    "FracSpdeError",
    "InvalidParameterError",
    "OutOfRangeError",
    "ShapeError",
    "InvalidInputError",
]
