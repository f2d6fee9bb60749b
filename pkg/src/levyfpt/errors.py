"""Exception hierarchy shared by all modules."""


class LevyFptError(Exception):
    """Base class for domain errors raised by this package."""


class ParameterError(LevyFptError, ValueError):
    pass


class DomainError(LevyFptError, ValueError):
    """Argument outside the analytic strip of a characteristic function."""


class MomentError(LevyFptError, ValueError):
    """A required exponential moment does not exist."""


class BranchError(LevyFptError, ArithmeticError):
    """A root landed on the inadmissible branch."""


class ConvergenceError(LevyFptError, ArithmeticError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class QuadratureError(LevyFptError, ArithmeticError):
    pass


class DampingError(LevyFptError, ValueError):
    pass


class TableError(LevyFptError, ArithmeticError):
    """Inverse-CDF table is not monotone."""


class BoundaryError(LevyFptError, ArithmeticError):
    """Perpetual exercise boundary is undefined."""


class ParseError(LevyFptError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyChainError(LevyFptError, ValueError):
    pass


class LengthMismatchError(LevyFptError, ValueError):
    pass
