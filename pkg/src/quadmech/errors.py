"""Exception hierarchy shared by every quadmech module."""


class QuadmechError(Exception):
    """Base class for all errors raised by the toolkit."""


class TruncationError(QuadmechError):
    """The truncated Fock space is too small for the requested accuracy."""


class AccuracyError(QuadmechError):
    """A numerical self-check (quadrature, normalisation) failed."""


class ValidityError(QuadmechError, ValueError):
    """Inputs fall outside the regime where a formula is valid."""


class FitError(QuadmechError):
    """An optimiser failed to converge.

    Attributes
    ----------
    residual : float or None
        Residual sum of squares at the last iterate, when available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class GridError(QuadmechError):
    """A lookup grid is too coarse, or a frequency grid does not cover the signal."""


class StatisticsError(QuadmechError):
    """A statistical query has no usable samples."""


class ConfigError(QuadmechError, ValueError):
    """A configuration document failed validation."""


class ConvergenceWarning(UserWarning):
    """An iterative method stopped without meeting its convergence criterion."""


class PrecisionWarning(UserWarning):
    """A statistical estimate uses fewer samples than recommended."""
