"""Exception types shared across the library.

Every error raised on purpose derives from HerError so callers can
catch library failures without also swallowing programming mistakes.
"""


class HerError(Exception):
    """Base class for all library errors."""


class InvalidInputError(HerError):
    """Malformed data: shape mismatches, non-finite values, empty inputs."""


class InvalidParameterError(HerError):
    """Out-of-range configuration, e.g. a non-positive ridge weight."""


class FormatError(HerError):
    """Corrupt or truncated serialized file.

    Carries the byte offset at which decoding failed so diagnostics can
    point at the exact spot in the file.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ModelNotIncrementalError(HerError):
    """An update was requested on a model fitted without inverse tracking."""


class PoolExhaustedError(HerError):
    """The annotation budget is spent or no unlabeled probes remain."""


class InvalidStateError(HerError):
    """An operation arrived out of order, e.g. a stale label submission."""


class NotFoundError(HerError):
    """A referenced resource (session, dataset, file) does not exist."""
