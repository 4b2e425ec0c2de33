"""Exception hierarchy shared by the solver modules."""


class StokesError(Exception):
    """Base class for all package errors."""


class DomainError(StokesError, ValueError):
    """Argument outside the domain where a quantity is defined."""


class ConfigError(StokesError, ValueError):
    """Invalid sampling, grid or run configuration."""


class ZeroModeError(StokesError, ValueError):
    """A 1/A-singular entry was requested at the zero tangential mode."""


class CompatibilityError(StokesError, ValueError):
    """Data violates a zero-mode compatibility condition."""


class ParityError(StokesError, ValueError):
    """Odd extension requested for a field with nonzero trace."""


class GridError(StokesError, ValueError):
    """Grid too coarse or inconsistent for the requested operation."""


class DecayError(StokesError, ValueError):
    """Data does not decay by the end of the normal grid."""


class ConvergenceError(StokesError, RuntimeError):
    """Quadrature failed to converge."""


class DegenerateDataError(StokesError, ZeroDivisionError):
    """Right-hand side of an estimate ratio vanishes."""
