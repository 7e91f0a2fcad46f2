"""Typed failure modes shared across the package.

Every anticipated failure raises one of these instead of a bare exception,
so callers (and the CLI exit-code mapping) can tell shape bugs, bad user
input, and stale on-disk artifacts apart.
"""


class GfnnError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(GfnnError, ValueError):
    """Array shapes are inconsistent with the operation's contract."""


class ConfigError(GfnnError, ValueError):
    """Invalid or contradictory configuration."""


class DataError(GfnnError, ValueError):
    """Input data violates a documented precondition (bad labels, sizes)."""


class IdxFormatError(GfnnError, ValueError):
    """An IDX file is malformed: wrong magic, truncated, or mispaired."""


class StaleCacheError(GfnnError, RuntimeError):
    """A feature-cache file does not match the dataset/bank that is in use."""


class CheckpointError(GfnnError, RuntimeError):
    """A checkpoint file is corrupt, truncated, or of an unknown version."""


class InternalError(GfnnError, RuntimeError):
    """Internal consistency violated (indicates a bug, not bad input)."""
