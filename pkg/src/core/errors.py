"""Exception hierarchy for trunc-ellipse.

Every domain failure derives from TruncEllipseError; the CLI maps those to
exit code 2, except OutputSchemaError, which is an internal fault (exit 70).
"""

from typing import Optional


class TruncEllipseError(Exception):
    """Base class for all domain errors."""
    pass


class ValidationError(TruncEllipseError):
    """Raised when validation fails."""
    pass


class ModelConstructionError(ValidationError):
    """Dimension mismatch or a covariance matrix that is not positive definite."""
    pass


class GeneratorError(ValidationError):
    """Bad generator parameters or tabulation grid."""
    pass


class DataError(ValidationError):
    """
    Bad input data.

    Attributes:
        row: zero-based row index of the offending observation, if known
        line: one-based file line number, if known
    """

    def __init__(self, message: str, row: Optional[int] = None, line: Optional[int] = None):
        super().__init__(message)
        self.row = row
        self.line = line


class UnsupportedOperationError(TruncEllipseError):
    """Operation not available for this generator kind."""
    pass


class NormalizingConstantError(TruncEllipseError):
    """The normalizing integral is zero, divergent or non-finite."""
    pass


class MomentError(TruncEllipseError):
    """A requested radial moment does not exist."""
    pass


class SingularConfigurationError(TruncEllipseError):
    """The zero-correlation construction is singular (h1 = 0)."""
    pass


class SamplingError(TruncEllipseError):
    """
    Sampling failed before the requested size was reached.

    Attributes:
        partial: SampleBatch with whatever was drawn (may be None)
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class RadialTabulationError(SamplingError):
    """Radial inverse-CDF table did not capture enough mass."""
    pass


class NonConvergenceError(TruncEllipseError):
    """
    Optimizer failed on every start.

    Attributes:
        reports: list of FitReport objects (best point found per fit)
    """

    def __init__(self, message: str, reports=None):
        super().__init__(message)
        self.reports = list(reports or [])


class OutputSchemaError(TruncEllipseError):
    """A result document failed validation against its own output schema."""

    def __init__(self, message: str, schema: str = ""):
        super().__init__(message)
        self.schema = schema
