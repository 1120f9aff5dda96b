"""Exception hierarchy shared by all modules."""


class HalfSphereError(Exception):
    """Base class for package errors."""


class DomainError(HalfSphereError, ValueError):
    """Input outside the domain of a map or closed form (poles, K <= 0, ...)."""


class UsageError(HalfSphereError, ValueError):
    """Caller supplied an unsupported option or mismatched objects."""


class ParseError(HalfSphereError, ValueError):
    """Syntax error in an expression. ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset=0, text=None):
        self.offset = int(offset)
        self.text = text
        super().__init__(f"{message} at offset {self.offset}")


class ExpressionNameError(HalfSphereError, NameError):
    """Unknown identifier in an expression."""

    def __init__(self, name, offset=0):
        super().__init__(f"unknown identifier {name!r} at offset {int(offset)}")
        # NameError.__init__ resets .name, so set it afterwards
        self.name = name
        self.offset = int(offset)


class EvaluationError(HalfSphereError, ArithmeticError):
    """Division by zero or a square root of a negative number during evaluation."""


class PositivityError(DomainError):
    """A field that must be positive is not. ``witness`` holds a point where it fails."""

    def __init__(self, message, witness=None, value=None):
        self.witness = witness
        self.value = value
        super().__init__(message)


class ResolutionError(HalfSphereError):
    """Sampled data too sparse for the requested derivative."""


class GenericityError(HalfSphereError):
    """(K, H) fails the genericity test; ``report`` carries the witnesses."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class CombinatorialLimitError(HalfSphereError):
    """Too many critical points for exhaustive subset enumeration."""


class ConvergenceError(HalfSphereError, RuntimeError):
    """An iterative solver hit its iteration cap. ``info`` holds diagnostics."""

    def __init__(self, message, info=None):
        self.info = info or {}
        super().__init__(message)


class FitError(HalfSphereError):
    """Bubble fit could not be carried out."""


class SymmetryError(HalfSphereError):
    """Data required to be axisymmetric is not."""


class InfeasibleError(HalfSphereError):
    """No admissible configuration exists (e.g. no positive gamma solution)."""
