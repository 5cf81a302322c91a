"""Exception hierarchy shared across the package.

Two families matter to callers: configuration errors (bad inputs, caught
before any computation starts) and numerical failures (a run that began
but cannot continue).  The command line maps them to exit codes 2 and 3.
"""


class QmonitorError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(QmonitorError):
    """Invalid configuration or arguments; nothing was computed."""


class NumericalError(QmonitorError):
    """A computation started and then failed for numerical reasons."""


class MeasureDiedError(NumericalError):
    """All grid mass was lost, typically from too aggressive truncation."""


class StabilityError(ConfigError):
    """An explicit finite-difference step would violate its stability bound.

    Raised at configuration time, before stepping starts, hence a
    ConfigError: the fix is a smaller dt or a finer grid.
    """


class IntegrationError(NumericalError):
    """A trajectory left its domain of validity (e.g. packet width blew up)."""
