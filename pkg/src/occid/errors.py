"""Exception hierarchy shared by the library and the command line."""


class OccidError(Exception):
    """Base class for errors raised by occid."""


class ConfigError(OccidError, ValueError):
    """Invalid or inconsistent experiment configuration."""


class DataFormatError(OccidError, ValueError):
    """A trajectory, manifest or model file could not be parsed."""


class NumericalError(OccidError, ArithmeticError):
    """Factorization failure, divergence or an ill-conditioned recovery."""
