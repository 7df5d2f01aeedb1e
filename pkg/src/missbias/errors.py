"""Exception hierarchy shared by every module."""


class MissBiasError(Exception):
    """Base class for all library errors."""


class InvalidParameterError(MissBiasError, ValueError):
    pass


class InvalidInputError(MissBiasError, ValueError):
    pass


class NumericalError(MissBiasError, ArithmeticError):
    pass


class SingularDesignError(NumericalError):
    """Design columns are (numerically) linearly dependent."""


class InsufficientDataError(MissBiasError, ValueError):
    pass


class DegenerateScaleError(NumericalError):
    """A variance draw is undefined because the residual scatter is zero."""


class NoValidModelError(MissBiasError):
    pass


class DegenerateDensityError(MissBiasError, ValueError):
    pass


class OracleFailure(MissBiasError):
    pass


class ConfigError(MissBiasError, ValueError):
    pass
