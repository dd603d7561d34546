"""Exception types shared across hpunet."""
from __future__ import annotations

from typing import Any, Optional


class HpuNetError(Exception):
    """Base class for all hpunet failures."""


class ConfigError(HpuNetError, ValueError):
    """Invalid configuration value, key, or file line."""


class TapeError(HpuNetError):
    """A differentiation request that the tape cannot serve."""


class PlacementError(HpuNetError):
    """Synthetic objects could not be placed inside the image."""


class ConstraintError(HpuNetError, FloatingPointError):
    """The GECO reconstruction constraint became non-finite."""


class TrainingDivergedError(HpuNetError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, metrics: Optional[Any] = None) -> None:
        super().__init__(message)
        self.metrics = metrics


class ArchiveError(HpuNetError):
    """Malformed tensor archive."""


class BadMagicError(ArchiveError):
    pass


class UnsupportedVersionError(ArchiveError):
    pass


class TruncatedArchiveError(ArchiveError):
    pass
