"""Exception types shared across the package."""

from __future__ import annotations


class SicnmError(Exception):
    """Base class for all package errors."""


class CaseError(SicnmError, ValueError):
    """A case document could not be turned into a valid network model."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingSection(CaseError):
    pass


class MalformedRow(CaseError):
    pass


class NoSlack(CaseError):
    pass


class DanglingBranch(CaseError):
    pass


class InvalidCase(CaseError):
    """Any other violated case invariant (duplicate ids, bad limits, ...)."""


class ZeroImpedanceBranch(SicnmError, ValueError):
    pass


class NonFinite(SicnmError, ArithmeticError):
    pass


class Singular(SicnmError, ArithmeticError):
    """A factorization hit a zero pivot. Solvers treat this as a step rejection."""


class ShapeMismatch(SicnmError, ValueError):
    pass


class CycleDetected(SicnmError):
    """Reactive-limit enforcement kept switching bus types without settling."""

    def __init__(self, message: str, report=None) -> None:
        super().__init__(message)
        self.report = report
