"""Exception taxonomy shared across the package."""


class SigsymError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(SigsymError):
    """Operand shapes do not agree."""


class ContractError(SigsymError):
    """An argument violates a documented precondition."""


class NumericError(SigsymError):
    """A computation produced NaN/Inf or was fed non-finite values."""


class ConfigurationError(SigsymError):
    """A configuration value is inconsistent or out of range."""


class FormatError(SigsymError):
    """A byte stream is not in the expected container format."""


class ParseError(SigsymError):
    """A structured input could not be parsed.

    ``offset`` carries the byte or line position when known.
    """

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (at offset {offset})")
        self.offset = offset


class VocabularyError(SigsymError):
    """A label lies outside the configured vocabulary."""


class ArityError(SigsymError):
    """A label group has the wrong number of sources."""


class LengthError(SigsymError):
    """A sequence has an invalid or inconsistent length."""


class RangeError(SigsymError):
    """A numeric value lies outside its permitted interval."""


class IntegrityError(SigsymError):
    """Stored data failed its checksum or was truncated."""


class UnsupportedVersionError(SigsymError):
    """A stored artifact declares a version this code cannot read."""
