"""Exception types. Each carries the process exit code the CLI maps it to."""


class QCError(Exception):
    exit_code = 1


class UsageError(QCError):
    exit_code = 2


class DomainError(QCError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    exit_code = 3


class ContractError(DomainError):
    """Structural precondition violated (length mismatch, bad multi-index)."""


class UnsupportedCaseError(DomainError):
    """Input that the underlying formula does not cover (e.g. lambda * mean == 0)."""


class CapacityError(QCError):
    exit_code = 4


class DegenerateError(QCError, ArithmeticError):
    """Zero denominator, zero variance, perfectly correlated pair, ..."""

    exit_code = 5
