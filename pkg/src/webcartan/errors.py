"""Exception types shared across the package."""

from __future__ import annotations


class WebCartanError(Exception):
    """Base class for errors raised by this package."""


class ExprSyntaxError(WebCartanError, SyntaxError):
    """Malformed expression text; ``offset`` is a 0-based byte offset."""

    def __init__(self, message: str, text: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.msg = message
        self.text = text
        self.offset = offset


class UnknownVariable(WebCartanError, ValueError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown variable {name!r} at byte offset {offset}")
        self.name = name
        self.offset = offset


class DomainFault(WebCartanError, ArithmeticError):
    """Evaluation left the real domain of a subexpression."""

    def __init__(self, expr, point, reason: str = ""):
        self.expr = expr
        self.point = dict(point) if point is not None else {}
        self.reason = reason
        where = ", ".join(f"{k}={v!r}" for k, v in sorted(self.point.items()))
        super().__init__(f"cannot evaluate {expr} at ({where}): {reason}")


class InvalidSystem(WebCartanError, ValueError):
    pass


class DimensionError(WebCartanError, ValueError):
    pass


class FlatTorsion(WebCartanError):
    """Every torsion coefficient vanishes, so no normalization is available."""


class IllConditionedNormalizer(WebCartanError):
    pass


class InsufficientProbes(WebCartanError):
    pass


class PolicyMismatch(WebCartanError):
    """Two systems were normalized with different torsion index pairs."""


class NonAutonomousResult(WebCartanError):
    pass


class InversionFailure(WebCartanError):
    pass


class SignMismatch(WebCartanError):
    pass


class QuadratureFailure(WebCartanError):
    pass


class FileFormatError(WebCartanError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line
