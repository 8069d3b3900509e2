"""Exception types shared across the package."""


class FacadeGpError(Exception):
    """Base class for errors raised by facade_gp."""


class CloudParseError(FacadeGpError):
    """A point-cloud file could not be parsed.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateInputError(FacadeGpError):
    """Input geometry is rank-deficient (e.g. collinear points, < 3 samples)."""


class FormatVersionError(FacadeGpError):
    """A serialized artifact declares an unsupported format_version."""


class ConfigError(FacadeGpError):
    """A pipeline configuration file is malformed (unknown or invalid key)."""
