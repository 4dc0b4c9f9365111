"""Adaptive LQ control with cost-biased estimation and optimistic baselines."""

from .errors import (
    AdaptiveLQRError,
    DimensionMismatch,
    InvalidDelta,
    NoConvergence,
    NoFeasiblePoint,
    NonStabilizable,
    Unstable,
    UnknownBenchmark,
)
from .riccati import CostParams, RiccatiSolution, SystemParams, grad_avg_cost, solve_dare, solve_dlyap, spectral_radius

__version__ = "0.1.0"
