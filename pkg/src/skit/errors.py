class ValidationError(ValueError):
    """Input violates a documented precondition."""


class NumericError(ArithmeticError):
    """A computation hit a degenerate or non-convergent case."""


class ConvergenceError(NumericError):
    pass
