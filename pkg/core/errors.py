class LessError(Exception):
    """Base class for errors raised by the LESS tree library."""


class InvalidConfigurationError(LessError, ValueError):
    """Parameters are out of range or inconsistent (k > d, t < 1, ...)."""


class DataFormatError(LessError, ValueError):
    """Input data could not be parsed or does not match the model."""


class DegenerateMatrixError(LessError, ValueError):
    """The data matrix carries no usable signal (e.g. it is all zeros)."""
