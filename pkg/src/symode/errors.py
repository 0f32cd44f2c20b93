"""Exception types shared across the package."""


class SymodeError(Exception):
    """Base class for all package errors."""


class DomainError(SymodeError, ValueError):
    """An expression was evaluated outside its real domain."""


class NonFiniteError(SymodeError, ArithmeticError):
    """A value, partial derivative or gradient became inf/nan."""


class ParseError(SymodeError, ValueError):
    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class CorrectionUndefinedError(SymodeError, ValueError):
    """The small-sample AIC correction needs m > P + 2."""


class DivergedError(SymodeError, RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class AllFoldsDivergedError(SymodeError, RuntimeError):
    pass


class SchemaError(SymodeError, ValueError):
    """A file does not match the expected schema or version."""


class ValidationError(SymodeError, ValueError):
    """Input data failed validation (e.g. a NaN cell in a dataset CSV)."""


class DivideByZeroError(SymodeError, ZeroDivisionError):
    pass
