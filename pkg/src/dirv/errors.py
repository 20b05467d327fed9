"""Exception hierarchy shared by every module."""


class DirvError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(DirvError, ValueError):
    """A configuration value is missing, malformed or out of range."""


class InputFormatError(DirvError, ValueError):
    """An input record (file line, detection, region) is malformed."""


class ContractViolation(DirvError, ValueError):
    """A caller broke a documented precondition (shapes, roles, indices)."""


class NumericError(DirvError, ArithmeticError):
    """A computation received or produced non-finite numbers."""


class EvaluationError(DirvError):
    """Evaluation cannot produce a result (e.g. no verb has ground truth)."""
