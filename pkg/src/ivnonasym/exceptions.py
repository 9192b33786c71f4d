"""Exception hierarchy shared across the package.

All library errors derive from :class:`IvError` so callers (and the CLI)
can distinguish usage problems, data problems, and numerical failures.
"""

from __future__ import annotations


class IvError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(IvError, ValueError):
    """An argument is outside its mathematical domain."""


class ShapeError(IvError, ValueError):
    """Array arguments have incompatible shapes."""


class RankDeficiencyError(IvError):
    """The empirical cross-moment matrix is singular or too ill-conditioned.

    Carries the offending condition number so callers can report it.
    """

    def __init__(self, condition_number: float, message: str | None = None):
        self.condition_number = float(condition_number)
        super().__init__(
            message
            or f"cross-moment matrix is rank deficient (condition number {self.condition_number:.3e})"
        )


class InsufficientSampleError(IvError, ValueError):
    """An operation needs more observations than the dataset provides."""


class DegenerateSampleError(IvError, ValueError):
    """A sample is constant where positive spread is required."""


class DegenerateInstrumentError(IvError, ValueError):
    """The scalar instrument-covariate moment is exactly zero."""


class DataFormatError(IvError, ValueError):
    """A CSV or JSON input does not match its documented schema."""
