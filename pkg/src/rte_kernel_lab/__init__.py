"""Kernel separability and integral-form transport experiments."""

__version__ = "0.1.0"

from .errors import (ConfigError, ConvergenceError, DomainError, FitError, GeometryError,  # noqa: F401
                     NumericalError, ParameterError, RangeError, ResolutionError, ResourceError,
                     SingularityError)
from .geometry import BoxDomain, Grid, MediumField, attenuation, constant_medium  # noqa: F401
