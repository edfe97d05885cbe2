"""Exception hierarchy. Every error carries a stable ``code`` used by the CLI."""

from __future__ import annotations


class LocSLSError(Exception):
    code = "locsls_error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "details": self.details}


class ConfigurationError(LocSLSError, ValueError):
    code = "configuration_error"


class PatternError(ConfigurationError):
    code = "pattern_error"


class DareConvergenceError(LocSLSError, ArithmeticError):
    code = "dare_not_converged"


class SingularMatrixError(LocSLSError, ArithmeticError):
    code = "singular_matrix"


class UnstableError(LocSLSError, ArithmeticError):
    code = "unstable"


class InfeasibleError(LocSLSError, ArithmeticError):
    code = "infeasible"


class UnboundedOrSingularError(LocSLSError, ArithmeticError):
    code = "unbounded_or_singular"


class LocalizabilityError(LocSLSError):
    """Boundary input block is not full row rank for some column."""

    code = "not_localizable"


class ColumnSynthesisError(LocSLSError):
    """Aggregate of per-column failures, keyed by global column index."""

    code = "column_synthesis_failed"

    def __init__(self, failures: dict[int, LocSLSError]):
        self.failures = dict(sorted(failures.items()))
        cols = ", ".join(str(j) for j in self.failures)
        super().__init__(
            f"synthesis failed for {len(self.failures)} column(s): {cols}",
            columns={str(j): e.to_dict() for j, e in self.failures.items()},
        )
