"""Exception types shared across the package."""


class PlurizeroError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(PlurizeroError, ValueError):
    pass


class DegeneratePointError(PlurizeroError, ValueError):
    """Raised where the Bergman-type function vanishes."""


class ZeroSetPoint(PlurizeroError, ArithmeticError):
    """The evaluation point lies on the zero set, so log|f| is -inf."""


class SingularGramError(PlurizeroError, ArithmeticError):
    def __init__(self, message, condition_number=float("inf")):
        super().__init__(f"{message} (condition number ~ {condition_number:.3e})")
        self.condition_number = condition_number


class NoClosedFormError(PlurizeroError, ValueError):
    pass


class ConvergenceError(PlurizeroError, ArithmeticError):
    pass


class NonGenericSystemError(PlurizeroError, ArithmeticError):
    """The polynomial system has a positive-dimensional common zero locus."""


class UnsupportedPairing(PlurizeroError, ValueError):
    pass


class ConfigError(PlurizeroError, ValueError):
    """Aggregated configuration errors; ``errors`` holds (field path, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"{path or '<root>'}: {msg}" for path, msg in self.errors]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))
