"""Exception hierarchy.

Every error raised on purpose by this package derives from ``PatternPruneError``
and carries the CLI exit code it maps to.
"""


class PatternPruneError(Exception):
    exit_code = 1


class DomainError(PatternPruneError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    exit_code = 1


class ConfigurationError(PatternPruneError, ValueError):
    """Inputs that are individually valid but do not fit together."""

    exit_code = 3


class ConsistencyError(PatternPruneError, ValueError):
    """Data violates an invariant required by the operation (e.g. unprojected kernels)."""

    exit_code = 3


class FormatError(PatternPruneError, ValueError):
    """Malformed or truncated serialized data.

    Args:
        message: what went wrong.
        source: file name or other label of the offending input.
        offset: byte offset (or record number for text formats) where it was detected.
    """

    exit_code = 2

    def __init__(self, message, source=None, offset=None):
        self.source = source
        self.offset = offset
        where = []
        if source is not None:
            where.append(str(source))
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{': '.join([', '.join(where), message])}"
        super().__init__(message)
