"""Exception hierarchy shared across the package."""


class CurvFlowError(Exception):
    """Base class for all package errors."""


class ConeDomainError(CurvFlowError, ValueError):
    """A curvature tuple lies outside the open k-positive cone."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConeUnderflowError(ConeDomainError, ArithmeticError):
    """A k-subset sum is positive but below the underflow floor."""


class ConvexityLossError(ConeDomainError):
    """A mesh node left the k-positive cone during a flow."""


class EigenSolverError(CurvFlowError, ArithmeticError):
    """The symmetric eigensolver failed to converge."""


class ConfigError(CurvFlowError, ValueError):
    """Invalid run or lemma configuration."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line


class InsufficientDataError(CurvFlowError, ValueError):
    """Too few samples, or too little spread, to fit a trend."""
