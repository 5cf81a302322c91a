"""Error taxonomy for the plotting package."""


class PlotsError(Exception):
    """Base class for every error this package raises on purpose."""


class SpecError(PlotsError):
    """A PlotSpec or CLI request is malformed."""


class SchemaError(PlotsError):
    """An input file lacks the columns or keys the panel kind needs."""


class DataError(PlotsError):
    """An input file is missing, unreadable, or empty."""
