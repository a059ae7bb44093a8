"""Schatten-p steepest descent with a layerwise, data-driven exponent."""
from .fractional import FractionalMapPlan, fractional_map
from .optimizer import OptimizerConfig, SchattenOptimizer
from .selector import PStarConfig, compute_stats, select_pstar

__all__ = [
    "FractionalMapPlan",
    "OptimizerConfig",
    "PStarConfig",
    "SchattenOptimizer",
    "compute_stats",
    "fractional_map",
    "select_pstar",
]
__version__ = "0.1.0"
