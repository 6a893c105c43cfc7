"""Exception hierarchy shared by all mklnet modules."""


class MklError(Exception):
    """Base class for every error raised by mklnet."""


class InputError(MklError, ValueError):
    """An argument violates a documented precondition."""


class NumericError(MklError, ArithmeticError):
    """A numerical routine failed to reach its contract (no convergence, NaN, ...)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class RepresentationError(MklError, ValueError):
    """A function cannot be represented in the requested norm or basis."""


class SelectionError(MklError, RuntimeError):
    """Every candidate fit failed during parameter selection."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])
