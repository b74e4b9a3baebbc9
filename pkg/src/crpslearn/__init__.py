"""Online CRPS learning: combine quantile-grid forecasts with weights that
adapt over time and across probabilities."""

from .boa import BoaBank, BoaConfig, BoaLearner
from .grid import ExpertPanel, ObservationStream, ProbGrid, ValidationError, WeightSurface, validate_panel
from .loss import crps_grid, linearized_instant_regret, pinball, pinball_subgrad
from .spline import bspline_basis, constant_basis, identity_basis, smoother
from .tuning import TuningGrid, boa_bank

__version__ = "0.1.0"

__all__ = [
    "BoaBank",
    "BoaConfig",
    "BoaLearner",
    "ExpertPanel",
    "ObservationStream",
    "ProbGrid",
    "TuningGrid",
    "ValidationError",
    "WeightSurface",
    "boa_bank",
    "bspline_basis",
    "constant_basis",
    "crps_grid",
    "identity_basis",
    "linearized_instant_regret",
    "pinball",
    "pinball_subgrad",
    "smoother",
    "validate_panel",
]
