"""Exception hierarchy shared by every module of the package."""


class TwoFluidError(Exception):
    """Base class; the CLI maps every subclass to exit status 3."""


class InvalidLaw(TwoFluidError, ValueError):
    pass


class NoConvergence(TwoFluidError, RuntimeError):
    pass


class NonPositiveMass(TwoFluidError, ValueError):
    pass


class NegativeAlpha4(TwoFluidError, ValueError):
    pass


class StableParameters(TwoFluidError, ValueError):
    """Raised when an operation needs a positive real root but beta1*beta4 >= beta2*beta3."""


class OutOfRegime(TwoFluidError, ValueError):
    pass


class GridMismatch(TwoFluidError, ValueError):
    pass


class UndefinedAtZero(TwoFluidError, ValueError):
    pass


class GridTooCoarse(TwoFluidError, ValueError):
    pass


class StepTooLarge(TwoFluidError, ValueError):
    pass


class NoEscape(TwoFluidError, RuntimeError):
    """Signals that the run ended before reaching the escape threshold."""


class ConfigError(TwoFluidError, ValueError):
    """Malformed or inconsistent run configuration (CLI exit status 2)."""
