"""Exception types; ``exit_code`` is what the CLI returns for each family."""


class MfldpError(Exception):
    exit_code = 1


class ConfigError(MfldpError, ValueError):
    exit_code = 2


class LatticeMismatchError(ConfigError):
    pass


class NumericalError(MfldpError, ArithmeticError):
    exit_code = 3


class HartreeInstabilityError(NumericalError):
    def __init__(self, message, last_stable_time=None):
        super().__init__(message)
        self.last_stable_time = last_stable_time


class FluctuationInstabilityError(NumericalError):
    pass


class KrylovBreakdownError(NumericalError):
    pass


class DimensionCapError(MfldpError):
    exit_code = 4
