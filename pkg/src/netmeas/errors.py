"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`NetmeasError`.  Configuration-type errors additionally derive from
:class:`ConfigurationError`; the CLI maps those to exit status 2 and all
other package errors to exit status 1.
"""


class NetmeasError(Exception):
    """Base class for all package errors."""


class ConfigurationError(NetmeasError):
    """Invalid configuration, schema or expression input."""


class ParameterError(NetmeasError, ValueError):
    """Invalid parameter value."""


class ShapeError(NetmeasError, ValueError):
    """Array shapes or dimensions are inconsistent."""


class InsufficientDataError(NetmeasError, ValueError):
    pass


class RangeError(NetmeasError, ValueError):
    """Value lies outside the admissible range."""


class InvertibilityError(NetmeasError, ValueError):
    pass


class RankDeficiencyError(NetmeasError, ArithmeticError):
    """Normal-equation matrix is numerically singular."""


class AliasingError(NetmeasError, ValueError):
    pass


class ResamplingRequiredError(NetmeasError, ValueError):
    """Sampling intervals of two signals do not match."""


class InstabilityError(NetmeasError, ArithmeticError):
    def __init__(self, message, spectral_abscissa=None):
        super().__init__(message)
        self.spectral_abscissa = spectral_abscissa


class IllPosedError(NetmeasError, ArithmeticError):
    pass


class EvaluationError(NetmeasError, ArithmeticError):
    """A measurement function returned a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DataError(NetmeasError, ValueError):
    """Malformed or empty data."""


class CapabilityError(NetmeasError, TypeError):
    pass


class SegmentationError(NetmeasError, ValueError):
    pass


class InsufficientOverlapError(NetmeasError, ValueError):
    pass


class SchemaError(NetmeasError, KeyError):
    """Input is missing a field or sensor the model requires."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ExpressionError(ConfigurationError):
    """Syntax or name error in a measurement-function expression."""

    def __init__(self, message, position):
        super().__init__(f"{message} (position {position})")
        self.position = position


class ConfigError(ConfigurationError):
    pass


class PipelineStageError(NetmeasError):
    """Failure inside a pipeline stage; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
