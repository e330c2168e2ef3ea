"""Exception types raised across the package."""

from __future__ import annotations


class SubsketchError(Exception):
    """Base class for all package errors."""


class ParseError(SubsketchError, ValueError):
    def __init__(self, path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class DimensionError(SubsketchError, ValueError):
    pass


class ConfigError(SubsketchError, ValueError):
    pass


class SamplingError(SubsketchError, RuntimeError):
    pass


class IncompatibleError(SubsketchError, ValueError):
    """Sketches, tables or artifacts built under different configurations."""


class InconsistencyError(SubsketchError, RuntimeError):
    """An internal invariant that should be impossible was violated."""


class TrainingDivergedError(SubsketchError, RuntimeError):
    def __init__(self, epoch: int, batch: int):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")


class ArtifactError(SubsketchError, OSError):
    """Missing, unreadable or stale on-disk artifact."""
