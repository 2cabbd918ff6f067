"""Exception hierarchy; the CLI maps ``ValidationError`` to exit 2 and ``NumericalError`` to 3."""


class CrIndexError(Exception):
    pass


class ValidationError(CrIndexError, ValueError):
    """Malformed input: files, expressions, parameters out of range."""


class ExprError(ValidationError):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int, line: int | None = None):
        self.offset = offset
        self.line = line
        where = f"byte {offset}" if line is None else f"line {line}, byte {offset}"
        super().__init__(f"{message} ({where})")


class NumericalError(CrIndexError, ArithmeticError):
    """A computation left its domain of validity or failed to converge."""


class DomainError(NumericalError):
    """Evaluation outside the domain of smoothness (log/sqrt/division)."""


class ConvergenceError(NumericalError):
    pass


class NotPseudoconvexError(NumericalError):
    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)
