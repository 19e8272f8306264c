"""Exception hierarchy. Every error raised by the library derives from DFAError."""


class DFAError(Exception):
    pass


class ParameterError(DFAError, ValueError):
    """A hyperparameter is outside its valid range."""


class DimensionError(DFAError, ValueError):
    """Array shapes are incompatible."""


class CapacityError(DFAError, ValueError):
    """More orthogonal class vectors requested than the embedding can hold."""


class DegenerateInputError(DFAError, ValueError):
    """Input has zero norm where a direction is required."""


class NumericError(DFAError, ArithmeticError):
    """A loss or gradient became non-finite."""


class DataError(DFAError, ValueError):
    """Dataset content does not satisfy an operation's preconditions."""


class FormatError(DFAError, ValueError):
    """A file does not match its declared binary format."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(DFAError, ValueError):
    """Run configuration is invalid."""


class MetricUndefinedError(DFAError, ValueError):
    """A metric cannot be computed for the given labels."""
