"""Exception types shared across the package."""


class CdclError(Exception):
    """Base class for all package errors."""


class DataError(CdclError):
    """Malformed, inconsistent, or insufficient input data."""


class NumericalError(CdclError):
    """A numerical routine failed to converge or produced invalid output."""
