"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems -> 1, data/format
problems -> 2, numerical failures -> 3.
"""


class EchoPwError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(EchoPwError, ValueError):
    """Invalid acquisition, grid, schedule, or guidance configuration."""


class ShapeError(EchoPwError, ValueError):
    """Tensor or operator dimensions do not match."""


class FormatError(EchoPwError):
    """A binary or JSON file is malformed.

    ``offset`` holds the byte position where parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DegenerateInputError(EchoPwError):
    """Input data admits no meaningful result (e.g. an all-zero envelope)."""


class MeasurementUndefinedError(EchoPwError):
    """A metric is undefined for the given data (e.g. no half-max crossing)."""


class ExternalDenoiserError(EchoPwError):
    """The external denoiser process failed, timed out, or replied garbage."""
