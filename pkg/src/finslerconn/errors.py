"""Exception taxonomy shared across the package."""

from __future__ import annotations


class FinslerError(Exception):
    """Base class for all package errors; carries a machine-readable detail dict."""

    def __init__(self, message: str, **detail):
        super().__init__(message)
        self.detail = detail


class ParseError(FinslerError):
    """Metric source text does not conform to the grammar."""

    def __init__(self, message: str, line: int = 1, column: int = 0):
        super().__init__(message, line=line, column=column)
        self.line = line
        self.column = column

    def __str__(self):
        return f"{self.args[0]} (line {self.line}, column {self.column})"


class DomainError(FinslerError):
    """Evaluation left the admissible domain (guard violation, sqrt of a
    negative, division by zero, ...). ``subexpression`` names the offender."""

    def __init__(self, message: str, subexpression: str | None = None, **detail):
        super().__init__(message, subexpression=subexpression, **detail)
        self.subexpression = subexpression


class HomogeneityError(FinslerError):
    """A derivative identity implied by 1-homogeneity failed; the input
    expression is not a Finsler metric (or is evaluated at a bad point)."""


class DegeneracyError(FinslerError):
    """Degeneracy analysis failed: no invertible coordinate block, a
    degenerate adapted frame, or a vanishing metric value where one is
    required."""


class ConsistencyError(FinslerError):
    """No multiplier choice keeps the constraints satisfied along the flow."""


class InvalidStateError(FinslerError):
    """An initial state violates a precondition (inadmissible point,
    nonzero constraint residual, wrong normalization for the gauge)."""
