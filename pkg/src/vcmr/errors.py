"""Exception hierarchy shared by every module in the package."""


class VcmrError(Exception):
    """Base class for all validation errors raised by this package."""


class InvalidSpanError(VcmrError, ValueError):
    """A time span with non-positive length, a negative start, or non-finite bounds."""


class InvalidInputError(VcmrError, ValueError):
    pass


class EmptyInputError(InvalidInputError):
    pass


class DimensionMismatchError(VcmrError, ValueError):
    pass


class NoValidSpanError(VcmrError, ValueError):
    """Raised when a logit array is too short to contain a start < end pair."""


class EmbeddingLoadError(VcmrError):
    """Base class for failures while reading an embedding file."""


class MalformedHeaderError(EmbeddingLoadError):
    pass


class DuplicateIdError(EmbeddingLoadError):
    pass


class NonFiniteValueError(EmbeddingLoadError):
    pass


class EmbeddingDimensionError(EmbeddingLoadError, DimensionMismatchError):
    pass
