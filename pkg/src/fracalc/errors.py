"""Exception hierarchy shared by all fracalc modules."""


class FracalcError(Exception):
    """Base class for every error raised by fracalc."""

    #: short machine-readable tag used by the CLI error line
    code = "error"


class PoleError(FracalcError, ValueError):
    code = "pole"


class AccuracyError(FracalcError, ArithmeticError):
    code = "accuracy"


class BoundViolation(FracalcError):
    code = "bound-violation"

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class GridMismatch(FracalcError, ValueError):
    code = "grid-mismatch"


class IncompatibleInitialValue(FracalcError, ValueError):
    code = "incompatible-initial-value"


class OrderTooLow(FracalcError, ValueError):
    code = "order-too-low"


class UnsupportedOrder(FracalcError, ValueError):
    code = "unsupported-order"


class TruncationDominates(FracalcError, ValueError):
    code = "truncation-dominates"


class CoercivityViolation(FracalcError):
    code = "coercivity-violation"

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class OrderViolation(FracalcError, ValueError):
    code = "order-violation"


class EllipticityViolation(FracalcError, ValueError):
    code = "ellipticity-violation"


class ConvergenceFailure(FracalcError):
    code = "eigensolver-failure"


class NonConvergence(FracalcError):
    code = "non-convergence"

    def __init__(self, message, max_iter=None, gap=None):
        super().__init__(message)
        self.max_iter = max_iter
        self.gap = gap


class CompatibilityViolation(FracalcError, ValueError):
    code = "compatibility-violation"


class DegenerateProjection(FracalcError, ValueError):
    code = "degenerate-projection"


class IllConditioned(FracalcError):
    code = "ill-conditioned"

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(FracalcError, ValueError):
    code = "config"
