"""Exception and warning types shared across the package."""


class QedError(Exception):
    """Base class for all package errors."""


class DomainError(QedError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConvergenceError(QedError, ArithmeticError):
    """An iterative or adaptive routine failed to reach its tolerance."""


class DivergenceError(QedError, ArithmeticError):
    """A sum or integral that must be finite diverges."""


class UnsupportedError(QedError, NotImplementedError):
    """The profile lacks the structure an operation needs (e.g. an inverse)."""


class NoSignChangeError(QedError, ArithmeticError):
    """Root bracketing failed to find a sign change."""


class CuspError(QedError, ValueError):
    """Boundary slopes do not form a cusp at the origin."""


class BranchError(QedError, ArithmeticError):
    """No Lambert W branch gives an admissible real solution."""


class NonConvergenceError(QedError, ArithmeticError):
    """A power series failed to contract within the allotted terms."""


class WindowWarning(UserWarning):
    """An exhaustive search hit the edge of its window."""


# CLI exit codes keyed by error class
BAD_INPUT = (DomainError, UnsupportedError, CuspError)
NUMERICAL = (ConvergenceError, DivergenceError, NoSignChangeError,
             BranchError, NonConvergenceError)
