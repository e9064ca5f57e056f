"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: InputError -> 2, FormatError -> 3,
GenerationAborted -> 4.
"""


class LidarSynthError(Exception):
    pass


class InputError(LidarSynthError, ValueError):
    """Caller supplied invalid values (non-finite, wrong range, empty)."""


class DimensionError(InputError):
    """Array shapes or parameter vector lengths do not match."""


class DegenerateError(InputError):
    """Geometry or statistics are undefined for the given input."""


class FormatError(LidarSynthError):
    """On-disk data is malformed."""


class ValidationError(FormatError):
    """A loaded structure violates one of its invariants."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class MagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class ConfigHashMismatch(FormatError):
    pass


class GenerationAborted(LidarSynthError):
    """Too many synthetic samples were discarded."""
