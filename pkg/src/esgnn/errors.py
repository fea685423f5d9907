"""Exception taxonomy shared across the package.

Every error raised on purpose derives from EsgnnError so callers can catch
library failures without swallowing genuine bugs.
"""


class EsgnnError(Exception):
    """Base class for all deliberate failures."""


class DimensionError(EsgnnError):
    """Array shapes disagree with an operation's contract."""


class ConfigurationError(EsgnnError):
    """A config object or parameter stack is internally inconsistent."""


class ContractError(EsgnnError):
    """A documented precondition was violated by the caller."""


class DomainError(EsgnnError):
    """Numeric input outside an operation's mathematical domain."""


class EmptySetError(EsgnnError):
    """A reduction over an empty set was requested."""


class DegenerateSegmentError(EsgnnError):
    """Segment geometry is rank deficient (collinear or coincident points)."""


class SceneFormatError(EsgnnError):
    """A scene or dataset file failed to parse."""


class SchemaVersionError(EsgnnError):
    """A file declares a schema this build does not understand."""


class SceneValidationError(EsgnnError):
    """A parsed scene violates referential or value constraints."""


class DataError(EsgnnError):
    """A dataset is unusable for the requested operation."""


class CheckpointError(EsgnnError):
    """A checkpoint is malformed or incompatible with the request."""


class ContractRefusal(EsgnnError):
    """The library refuses an operation whose result would be meaningless."""
