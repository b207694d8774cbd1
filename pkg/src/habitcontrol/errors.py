"""Exception hierarchy shared by every module."""


class HabitControlError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(HabitControlError, ValueError):
    """Malformed or invalid model configuration."""


class DomainError(HabitControlError, ValueError):
    """Argument outside the domain where a quantity is defined."""


class ExplosionError(HabitControlError, ArithmeticError):
    """Time-to-go reaches the blow-up horizon of the auxiliary Riccati solution."""

    def __init__(self, message, t=None, s=None):
        super().__init__(message)
        self.t = t
        self.s = s


class SingularityError(HabitControlError, ArithmeticError):
    """``1 - 2 a(t;s) Omega(t)`` vanishes, so A and B are undefined."""

    def __init__(self, message, t=None, s=None):
        super().__init__(message)
        self.t = t
        self.s = s


class NumericError(HabitControlError, ArithmeticError):
    """A closed form left its domain (usually a sign of misclassification)."""


class PolicyError(HabitControlError, RuntimeError):
    """A feedback policy returned non-finite values or broke ``c >= Z``."""
