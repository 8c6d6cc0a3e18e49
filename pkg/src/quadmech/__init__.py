"""Quadratic electromechanics toolkit.

Forward models of qubit spectroscopy for a mechanical oscillator
quadratically coupled to a Cooper-pair-box qubit, a rate-equation engine
for sideband-driven phonon dynamics, and deconvolution tools that recover
phonon-number distributions with bounded Fano factors.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AccuracyError,
    ConfigError,
    FitError,
    GridError,
    QuadmechError,
    StatisticsError,
    TruncationError,
    ValidityError,
)
from .params import DitherDriveParams, SystemParams  # noqa: F401
