"""Exception hierarchy shared by every module of the package."""


class RiskBanditError(Exception):
    """Base class for all package errors."""


class AssumptionViolated(RiskBanditError, ValueError):
    """A model does not meet the regularity an oracle or estimator needs."""


class NonConvergence(RiskBanditError, RuntimeError):
    """A root finder or quadrature exceeded its iteration cap."""


class EmptyBuffer(RiskBanditError, ValueError):
    pass


class MissingConstant(RiskBanditError, ValueError):
    """A risk spec lacks a bound constant the confidence radius needs."""


class BadConfig(RiskBanditError, ValueError):
    pass


class NotInitialized(RiskBanditError, RuntimeError):
    """An index was requested for an arm that has never been pulled."""


class CostOutOfRange(RiskBanditError, ValueError):
    pass


class NonUniqueOptimum(RiskBanditError, ValueError):
    pass


class DegenerateGap(RiskBanditError, ValueError):
    """A regret bound is undefined at the requested horizon."""


class NonPositiveRegret(RiskBanditError, ValueError):
    pass


class ConfigError(RiskBanditError, ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class ValidationError(ConfigError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
