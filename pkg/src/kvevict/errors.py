"""Typed errors raised by the toolkit.

Every contract violation maps to one of these classes so callers (and the
command line driver) can distinguish bad configuration from bad data from
broken trace files.
"""

from __future__ import annotations


class KvEvictError(Exception):
    """Base class for all toolkit errors."""


class InvalidDimension(KvEvictError):
    """Shape or dimensionality of an input does not match the contract."""


class NonFiniteInput(KvEvictError):
    """An input contains NaN or infinite entries."""


class DegenerateVector(KvEvictError):
    """A vector with zero norm was passed where a direction is required."""


class InvalidInput(KvEvictError):
    """An input value violates a precondition (empty set, bad position, ...)."""


class InvalidConfig(KvEvictError):
    """A configuration value is out of its allowed range."""


class MissingPseudoKeys(KvEvictError):
    """The visibility rule references pseudo keys that were not provided."""


class MissingDecodePhase(KvEvictError):
    """The trace carries no decode-phase queries but the operation needs them."""


class InvalidTrace(KvEvictError):
    """Trace contents are structurally inconsistent or non-finite."""


class IoError(KvEvictError):
    """An underlying stream or file operation failed."""


class NotATrace(KvEvictError):
    """The byte stream does not start with the trace magic."""


class UnsupportedVersion(KvEvictError):
    """The trace declares a format version newer than this reader."""


class CorruptTrace(KvEvictError):
    """The byte stream is truncated or carries trailing garbage."""
