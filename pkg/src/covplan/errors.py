"""Exception types shared across the package."""

from __future__ import annotations


class CovplanError(Exception):
    """Base class for all covplan errors."""


class DegenerateDesign(CovplanError):
    """The treatment/group structure carries no usable variation."""


class InsufficientData(CovplanError):
    """Too few observations for the requested model."""


class RankDeficient(CovplanError):
    """A design block is numerically singular.

    The tolerance is a relative singular-value ratio of 1e-10; errors are
    raised deterministically instead of falling back to a pseudo-inverse so
    that collinear covariates are visible to the planner.
    """

    def __init__(self, message: str, columns: tuple[str, ...] = ()):
        if columns:
            message = f"{message}: {', '.join(columns)}"
        super().__init__(message)
        self.columns = tuple(columns)


class InvalidContrast(CovplanError):
    """Contrast rows must sum to zero and be linearly independent."""


class DomainError(CovplanError):
    """An argument is outside the mathematical domain of a formula."""


class NonConvergence(CovplanError):
    """An iterative evaluation failed to reach its tolerance."""


class MissingColumn(CovplanError):
    """A named column is absent from the data."""

    def __init__(self, message: str, columns: tuple[str, ...] = ()):
        if columns:
            message = f"{message}: {', '.join(columns)}"
        super().__init__(message)
        self.columns = tuple(columns)
