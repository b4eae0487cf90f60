"""
Exception hierarchy for the analyzer.

Parser failures derive from ModelError, algebra failures from ExpressionError;
everything derives from AnalyzerError so the API and CLI can map outcomes to
status codes in one place.
"""
from typing import Optional


class AnalyzerError(Exception):
    """Base class for all analyzer errors."""


# ============================================================================
# Model file errors
# ============================================================================

class ModelError(AnalyzerError):
    """A model file or inline expression could not be accepted."""


class ModelSyntaxError(ModelError):
    """Malformed directive or expression."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class UndeclaredSymbol(ModelError):
    """Identifier not declared in the model scope."""

    def __init__(self, name: str, line: int = 0, column: int = 0):
        self.name = name
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: undeclared symbol '{name}'")


class ArityMismatch(ModelError):
    """Wrong number of usolution entries or function arguments."""


class DuplicateSymbol(ModelError):
    """A name declared twice in one scope."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"'{name}' is already declared")


# ============================================================================
# Algebra errors
# ============================================================================

class ExpressionError(AnalyzerError):
    """Base class for failures of the expression core."""


class DivisionByZero(ExpressionError):
    """A denominator normalized to zero."""


class Inconclusive(ExpressionError):
    """A symbolic decision could not be reached."""


class DegreeCapExceeded(Inconclusive):
    """Reduction or rationalization exceeded the configured total degree."""

    def __init__(self, degree: int, cap: int):
        self.degree = degree
        self.cap = cap
        super().__init__(f"total degree {degree} exceeds cap {cap}")


class PivotUndecidable(ExpressionError):
    """A pivot's nonvanishing does not follow from the assumptions."""

    def __init__(self, entry: str):
        self.entry = entry
        super().__init__(f"cannot decide that pivot '{entry}' is nonzero")


# ============================================================================
# Analysis errors
# ============================================================================

class ChainNotTerminated(AnalyzerError):
    """A constraint chain reached the maximum order without an empty level."""

    def __init__(self, order: int):
        self.order = order
        super().__init__(f"constraint chain did not terminate by order {order}")


class NonlinearNoUserSolution(AnalyzerError):
    """W is nonlinear in the velocities and no usolution was supplied."""


class UserSolutionInvalid(AnalyzerError):
    """The supplied velocity solution does not invert pi = W(q, u)."""

    def __init__(self, index: int, residual: Optional[str] = None):
        self.index = index
        self.residual = residual
        super().__init__(f"usolution fails at index {index}: residual {residual}")


class XNotInvertible(AnalyzerError):
    """The second-class bracket matrix is singular."""


class AssociatedFunctionMissing(AnalyzerError):
    """The associated function E can be neither verified nor synthesized."""


class VerificationFailed(AnalyzerError):
    """A synthesized object failed its defining identity."""


class SecondClassPresent(AnalyzerError):
    """The model has second-class constraints; conjecture analysis is refused."""


class DecompositionFailed(AnalyzerError):
    """An expression could not be written over the constraint set."""

    def __init__(self, residual: str):
        self.residual = residual
        super().__init__(f"nonzero residual after decomposition: {residual}")
