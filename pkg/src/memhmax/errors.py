"""Exception hierarchy.

Errors split into two families so the command line can map them onto exit
codes: ``MemHmaxIOError`` (exit 1) and ``ValidationError`` (exit 2).
"""


class MemHmaxError(Exception):
    """Base class for every error raised by this package."""


class MemHmaxIOError(MemHmaxError, OSError):
    """A file is missing, unreadable or unwritable."""


class ValidationError(MemHmaxError, ValueError):
    """Input data violates a contract."""


class FormatError(ValidationError):
    pass


class RangeError(ValidationError):
    pass


class ParamError(ValidationError):
    pass


class SizeError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class DegenerateError(ValidationError):
    pass


class EmptyInputError(ValidationError):
    pass


class DuplicateIdError(ValidationError):
    pass


class SchemaError(ValidationError):
    pass


class ConsistencyError(ValidationError):
    pass


class EmptyStoreError(ValidationError):
    pass
