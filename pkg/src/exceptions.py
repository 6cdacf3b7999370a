"""Exception hierarchy for ldtk.

Two families: ``InputError`` for invalid inputs (CLI exit code 1) and
``NumericalError`` for solver failures (CLI exit code 2).
"""


class LdtkError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 2


class InputError(LdtkError, ValueError):
    """Invalid model, parameter or configuration."""

    exit_code = 1


class NumericalError(LdtkError, ArithmeticError):
    """A numerical method failed on valid input."""

    exit_code = 2


# Input errors

class NegativeRate(InputError):
    pass


class IndexOutOfRange(InputError):
    pass


class NonIrreducible(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class IrreversibleTransition(InputError):
    pass


class NotMultiBath(InputError):
    pass


class TooLarge(InputError):
    pass


class IndexOrder(InputError):
    pass


class UnknownModel(InputError):
    pass


class DomainViolation(InputError):
    pass


class GridMismatch(InputError):
    pass


class PositiveArgument(InputError):
    pass


class QOutOfRange(InputError):
    pass


class QOutOfReach(InputError):
    pass


class BranchUnavailable(InputError):
    pass


class OutsideConvergence(InputError):
    pass


class InsufficientData(InputError):
    pass


class LambdaTooNegative(InputError):
    def __init__(self, u, message=None):
        self.u = u
        super().__init__(message or f"1+(e^lambda-1)g(u) <= 0 at u={u}")


class ParseError(InputError):
    def __init__(self, line, message):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class UnknownKey(InputError):
    def __init__(self, key):
        self.key = key
        super().__init__(f"unknown key '{key}'")


class MissingField(InputError):
    def __init__(self, field):
        self.field = field
        super().__init__(f"missing field '{field}'")


# Numerical errors

class NoConvergence(NumericalError):
    def __init__(self, iterations, residual, message=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            message or f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )


class SingularSystem(NumericalError):
    pass


class SolverSingular(NumericalError):
    pass


class NewtonDiverged(NumericalError):
    def __init__(self, residual, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"damped Newton failed (residual {residual:.3e}, iterations {iterations})")


class NonMonotoneF(NumericalError):
    pass


class RateOverflow(NumericalError):
    pass


class ZeroTotalRate(NumericalError):
    pass
