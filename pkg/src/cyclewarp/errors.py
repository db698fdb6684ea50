"""Exception hierarchy shared by the library and the command line."""


class CycleWarpError(Exception):
    """Base class for all errors raised by cyclewarp."""


class ConfigError(CycleWarpError, ValueError):
    """Invalid user input: parameters, configuration, files."""


class InvalidParamsError(ConfigError):
    pass


class NonEquidistantError(ConfigError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"x is not equidistant at index {index}")


class NumericalError(CycleWarpError, ArithmeticError):
    """A numerical procedure could not produce a finite answer."""


class DegeneratePathError(NumericalError):
    pass


class WeightCollapseError(NumericalError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"all particle weights vanished at step {step}")


class FitFailure(NumericalError):
    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)
