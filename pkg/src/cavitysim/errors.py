"""Package-wide exception types."""


class CavitySimError(Exception):
    """Base class for all package errors."""


class ValidationError(CavitySimError):
    """Bad input: domain violation, malformed config, mismatched spaces."""


class NumericalError(CavitySimError):
    """A numerical routine failed to meet its accuracy contract."""
