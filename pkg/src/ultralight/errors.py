"""Exception types shared across the package."""


class DimensionError(ValueError):
    """A tensor shape does not fit the operation it was handed to."""


class DomainError(ValueError):
    """A value lies outside the domain an operation is defined on."""


class ConfigError(ValueError):
    """A configuration is internally inconsistent or malformed."""


class ParseError(ValueError):
    """A binary or text artifact could not be decoded.

    ``offset`` is the byte position where decoding failed.
    """

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
