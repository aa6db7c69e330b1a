"""Exception hierarchy shared by every dkpca module."""


class DKPCAError(Exception):
    """Base class for all errors raised by dkpca."""


class InvalidArgumentError(DKPCAError, ValueError):
    """An argument violates a documented precondition (shape, range, type)."""


class DegenerateInputError(DKPCAError, ValueError):
    """Input is numerically rank deficient where full rank is required."""


class ConditionViolatedError(DKPCAError, ValueError):
    """A mathematical condition required by an analysis routine does not hold."""


class NoSupportError(DKPCAError, ValueError):
    """Kernel-smoother weights vanish: the query has no support in the training set."""


class CsvParseError(DKPCAError, ValueError):
    """Malformed CSV input. ``row`` and ``col`` are 1-based; ``col`` may be None."""

    def __init__(self, message, row, col=None):
        loc = f"row {row}" if col is None else f"row {row}, col {col}"
        super().__init__(f"{loc}: {message}")
        self.row = row
        self.col = col


class NumericalFailure(DKPCAError, RuntimeError):
    """The optimizer could not recover from a degenerate iterate."""
