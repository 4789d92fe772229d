"""Exception types shared across the library."""


class DimensionError(ValueError):
    """Array shapes are inconsistent with each other or with the scale pyramid."""


class DomainError(ValueError):
    """A value violates an operation's precondition (temperature, simplex, k range, ...)."""


class SceneFormatError(ValueError):
    """A scene JSON document is malformed; the message names the offending field."""
