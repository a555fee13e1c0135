class SparseAipwError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(SparseAipwError, ValueError):
    pass


class DegenerateInputError(SparseAipwError, ValueError):
    pass


class DomainError(SparseAipwError, ValueError):
    pass


class NumericalError(SparseAipwError, ArithmeticError):
    pass


class ConvergenceError(SparseAipwError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
