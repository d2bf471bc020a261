# -*- coding: utf-8 -*-

"""Exceptions raised by the Scientific Data Manager.

Each error also derives from the nearest builtin exception so that callers can
catch, for example, a bad map array as a ValueError.
"""


class SDMError(Exception):
    """Base class for all errors raised by irregular_sdm."""


class InitializationError(SDMError, OSError):
    """The catalog directory could not be created or written."""


class CatalogCorruptError(SDMError):
    """A catalog table file could not be parsed.

    Attributes
    ----------
    path : pathlib.Path
        The offending table file.
    """

    def __init__(self, path, reason):
        self.path = path
        self.reason = reason
        super().__init__(f"Catalog table {path} is corrupt: {reason}")

    def __reduce__(self):
        return (self.__class__, (self.path, self.reason))


class ConflictError(SDMError):
    """A record with the same key already exists."""


class ValidationError(SDMError, ValueError):
    """An argument or record violates its invariants."""


class LifecycleError(SDMError, RuntimeError):
    """An object was used after it was finalized or released."""


class StateError(SDMError, RuntimeError):
    """An operation was called before its prerequisites were set up."""


class NotFoundError(SDMError, LookupError):
    """A dataset, group, or region is not known to the catalog."""


class BoundsError(SDMError, IndexError):
    """A file is shorter than the extent requested from it."""


class HistoryCorruptError(SDMError):
    """A history file is missing, truncated, or disagrees with the catalog."""


class HistoryMismatch(SDMError):
    """The history was made for a different number of processes.

    This is the signal for the caller to fall back to distributing the edges.
    """

    def __init__(self, recorded, requested):
        self.recorded = recorded
        self.requested = requested
        super().__init__(
            f"History was created for {recorded} processes, not {requested}"
        )

    def __reduce__(self):
        return (self.__class__, (self.recorded, self.requested))


class CollectiveMismatchError(SDMError):
    """Ranks entered a collective with inconsistent arguments."""


class DeadlockError(SDMError):
    """A rank left the job while others were waiting in a collective."""


class RankFailure(SDMError):
    """A rank raised an exception, failing the whole job.

    Attributes
    ----------
    rank : int
        The lowest rank that failed.
    error : Exception
        The exception raised on that rank.
    """

    def __init__(self, rank, error):
        self.rank = rank
        self.error = error
        super().__init__(f"Rank {rank} failed: {error!r}")

    def __reduce__(self):
        return (self.__class__, (self.rank, self.error))


class VerificationError(SDMError):
    """Output did not agree with the sequential oracle."""
