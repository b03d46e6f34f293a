"""Exception types shared across the package.

Validation problems raise :class:`ConfigError` (CLI exit code 2); numerical
failures raise :class:`NumericalError` subclasses carrying a short
machine-readable ``reason`` (CLI exit code 3).
"""


class ConfigError(ValueError):
    """Invalid input: bad grid, unknown family, schema violation."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NumericalError(RuntimeError):
    reason = "numerical_failure"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class QuadratureError(NumericalError):
    reason = "quadrature_not_converged"


class SingularOperatorError(NumericalError):
    reason = "singular_operator"


class ValidityWindowError(ConfigError):
    """Requested time lies outside the finite-box validity window."""
