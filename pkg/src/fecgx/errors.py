"""Exception types shared across the package."""


class FecgError(Exception):
    """Base class for all package-specific errors."""


class DegenerateSignalError(FecgError, ValueError):
    """A computation received a constant / zero-power signal it cannot handle."""


class FilterDesignError(FecgError, ValueError):
    """A filter specification is invalid for the given sample rate."""


class FitError(FecgError, ValueError):
    """A least-squares fit is ill-conditioned or rank deficient."""


class ShapeError(FecgError, ValueError):
    """Array shapes (or channel counts) do not agree."""


class FormatError(FecgError, ValueError):
    """A file is malformed, truncated, or has an unknown version."""


class ConfigError(FecgError, ValueError):
    """A config file cannot be parsed or contains invalid values."""
