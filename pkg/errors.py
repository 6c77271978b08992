"""
Exception hierarchy for prochern.

Every failure the engine can report is a ProchernError subclass, so callers
(the CLI in particular) can map the whole family to one exit code.
"""

from typing import Any, Optional


class ProchernError(RuntimeError):
    """Base class for all engine errors."""


class AtomTableError(ProchernError):
    """Operands built over different atom tables, or a malformed table."""


class UnknownAtomError(ProchernError):
    """A symbol was used that the atom table does not declare."""

    def __init__(self, symbol: str):
        super().__init__(f"unknown atom '{symbol}'")
        self.symbol = symbol


class DenominatorError(ProchernError):
    """A denominator is zero or lies outside the declared multiplicative set."""


class ZeroMultiplierError(ProchernError):
    """A limit multiplier p is zero."""


class StratumError(ProchernError):
    """A stratum id that the model does not have, or a malformed model."""


class ParentMismatchError(ProchernError):
    """Pointwise operation on functions or sets over different models."""


class EndpointMismatchError(ProchernError):
    """Morphisms or bivariant classes whose endpoints do not compose."""


class StrictnessError(ProchernError):
    """A strict morphism violates cls(s) = cls(map(s)) * F_s, or a strict one was required."""


class NonConstantWeightError(ProchernError):
    """Fiber weights differ across target strata."""

    def __init__(self, first: str, first_weight: Any, second: str, second_weight: Any):
        super().__init__(
            f"fiber weight is not constant: {first} has {first_weight}, "
            f"{second} has {second_weight}"
        )
        self.strata = (first, second)
        self.weights = (first_weight, second_weight)


class ZeroWeightError(ProchernError):
    """A step weight used as a denominator is zero."""

    def __init__(self, step: int):
        super().__init__(f"step {step} has zero weight")
        self.step = step


class TowerMismatchError(ProchernError):
    """Pro-objects living on different towers were combined."""


class LevelError(ProchernError):
    """A level below the representative's level, or below the tower base, was requested."""


class UnstableFunctionError(ProchernError):
    """A stable measure was requested for a function that is not stable."""

    def __init__(self, message: str, witness_level: Optional[int] = None):
        super().__init__(message)
        self.witness_level = witness_level


class UndefinedValueError(ProchernError):
    """An integrand f is not defined at a realized value."""

    def __init__(self, value: int):
        super().__init__(f"integrand undefined at value {value}")
        self.value = value


class UnsupportedInputError(ProchernError):
    """Input the model deliberately does not handle (singular arc bases, for instance)."""


class SquareError(ProchernError):
    """A diagram that was supposed to be a fiber square is not one."""


class DSLError(ProchernError):
    """Error in a prochern document, located by line and column."""

    kind = "error"

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{self.kind} at {line}:{column}: {message}")
        self.message = message
        self.line = line
        self.column = column


class LexError(DSLError):
    kind = "lexical error"


class ParseError(DSLError):
    kind = "syntax error"


class ResolutionError(DSLError):
    kind = "resolution error"


class EvaluationError(ProchernError):
    """An engine error raised while evaluating a named declaration or statement."""

    def __init__(self, name: str, cause: Exception):
        super().__init__(f"{name}: {cause}")
        self.name = name
        self.cause = cause
