"""Exception taxonomy shared across the package.

Class names double as the machine-parsable ``error_kind:`` labels the CLI
prints on stderr, so they are stable API.
"""


class MorphscatError(Exception):
    """Base class for all errors raised by this package."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class IoError(MorphscatError):
    """A file is missing, unreadable, or unwritable."""


class DecodeError(MorphscatError):
    """An image file is corrupt or in an unsupported format."""


class CropOutOfBounds(MorphscatError):
    """A crop rectangle does not lie within the source image."""


class PlaneTooSmall(MorphscatError):
    """A 2D plane is smaller than the filter support requires."""


class InvalidConfig(MorphscatError):
    """A scattering configuration violates its invariants."""


class DimensionMismatch(MorphscatError):
    """Array shapes or vector lengths are inconsistent."""


class ConfigMismatch(MorphscatError):
    """Features and model were produced under different scattering configs."""


class SingleClassError(MorphscatError):
    """Training data contains only one of the two classes."""


class SolverError(MorphscatError):
    """The regularized kernel system could not be solved."""


class EmptyScores(MorphscatError):
    """A metric was requested on an empty score list."""


class ParseError(MorphscatError):
    """A manifest line could not be parsed."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SchemaError(MorphscatError):
    """A manifest record violates the pair-record schema."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class LeakageError(MorphscatError):
    """A pair straddles the train/test subject split."""

    def __init__(self, message, pairs=()):
        super().__init__(message)
        self.pairs = tuple(pairs)


class VersionError(MorphscatError):
    """A serialized file has the wrong magic or an unsupported version."""


class ChecksumError(MorphscatError):
    """A serialized file is truncated or fails its CRC check."""
