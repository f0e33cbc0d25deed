"""Exception types shared across the package."""


class RoboCloudError(Exception):
    """Base class for all package errors."""


class ConfigError(RoboCloudError, ValueError):
    pass


# backend fabric
class UnmountedPathError(RoboCloudError, LookupError):
    pass


class OverlappingMountError(RoboCloudError, ValueError):
    pass


class MissingObjectError(RoboCloudError, LookupError):
    pass


class BackendWriteError(RoboCloudError, OSError):
    pass


# tiered store
class DuplicateBlockError(RoboCloudError, ValueError):
    pass


class UnknownBlockError(RoboCloudError, LookupError):
    pass


class UnknownTierError(RoboCloudError, LookupError):
    pass


class BlockTooLargeError(RoboCloudError, ValueError):
    pass


# metastore
class DuplicateRecordError(RoboCloudError, ValueError):
    pass


class MissingRecordError(RoboCloudError, LookupError):
    pass


class InvalidRecordError(RoboCloudError, ValueError):
    pass


class InvalidPredicateError(RoboCloudError, ValueError):
    pass


# learning / prefetch / harness
class ExtractorUnavailableError(RoboCloudError, ConnectionError):
    pass


class TimeRegressionError(RoboCloudError, ValueError):
    pass


class MalformedEventError(RoboCloudError, ValueError):
    """Raised by replay; ``position`` is the index of the offending event."""

    def __init__(self, position: int, message: str):
        super().__init__(f"event {position}: {message}")
        self.position = position
