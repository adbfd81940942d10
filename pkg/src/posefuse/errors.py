"""Exception types shared across the package."""


class EmptyAggregationError(ValueError):
    """No usable input remains for an aggregation (all weights zero,
    empty pixel mask, or a fully cancelling quaternion sum)."""


class FormatError(ValueError):
    """A binary container is malformed; `offset` is the byte position
    at which the problem was detected, when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SchemaError(ValueError):
    """A JSON document violates its schema; `path` names the offending
    element, e.g. "objects[2].quaternion"."""

    def __init__(self, message, path=None):
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
