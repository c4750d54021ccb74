"""Exception types shared across the package."""


class DomainError(ValueError):
    """A point lies outside the domain it was evaluated on."""


class ParameterError(ValueError):
    """An argument is outside its admissible range."""


class GeometryError(ValueError):
    """Source/target sets violate a separation hypothesis."""


class SingularityError(ValueError):
    """A kernel was evaluated at coincident points."""


class ResolutionError(ValueError):
    """A quadrature or sampling grid is too coarse for the requested mode."""


class RangeError(OverflowError):
    """Coefficients or intermediate values leave the representable range."""


class NumericalError(ArithmeticError):
    """A matrix failed a numerical sanity check (e.g. not PSD)."""


class ResourceError(MemoryError):
    """A requested assembly would exceed the memory budget."""


class ConvergenceError(RuntimeError):
    """An iteration did not reach its tolerance.

    The residual history is kept on the exception so callers can inspect
    how far the iteration got.
    """

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class FitError(ValueError):
    """Too few samples in a fit window."""


class ConfigError(ValueError):
    """A run file could not be parsed or is inconsistent.

    ``line`` and ``col`` point at the offending spot when known.
    """

    def __init__(self, message, line=None, col=None):
        where = f" (line {line}, column {col})" if line is not None else ""
        super().__init__(message + where)
        self.line, self.col = line, col
