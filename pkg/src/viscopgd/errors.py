"""Exception types shared across the solver suite."""


class ViscoPGDError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(ViscoPGDError, ValueError):
    """A constructor or operation received an out-of-range parameter."""


class DomainError(ViscoPGDError, ValueError):
    """A coordinate lies outside the spatial or temporal domain."""


class MeshError(ViscoPGDError, ValueError):
    """The mesh is degenerate (non-increasing nodes, zero-length elements)."""


class ShapeMismatchError(ViscoPGDError, ValueError):
    """An array does not match the discretization it is used with."""


class SingularSystemError(ViscoPGDError, RuntimeError):
    """A linear system has no unique solution (e.g. no clamped node)."""


class NonFiniteError(ViscoPGDError, RuntimeError):
    """NaN or Inf detected during a solve; carries a diagnostic message."""


class ZeroReferenceError(ViscoPGDError, ZeroDivisionError):
    """A relative error was requested against a zero-norm reference."""


class ConfigError(ViscoPGDError, ValueError):
    """A run configuration file is missing, malformed or inconsistent."""


class SignalParseError(ViscoPGDError, ValueError):
    """A signal CSV could not be parsed; the message cites the line number."""


class ComparisonError(ViscoPGDError, ValueError):
    """Two runs cannot be compared (mismatched horizons or field shapes)."""
