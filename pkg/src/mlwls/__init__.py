"""Multilevel weighted least-squares polynomial approximation."""

__version__ = "0.1.0"

from .adaptive import AdaptiveMultilevel, AdaptiveState, run_adaptive
from .indexsets import DownwardClosedSet, admissible_set, block_indices, total_degree_set
from .lsq import LeastSquaresFit, WeightedLeastSquares, gramian_deviation, sample_count_for
from .multilevel import (MultilevelLeastSquares, MultilevelSchedule, RateParams, build_schedule,
                         choose_levels, classify_regime, run_multilevel, work_estimate)
from .polybasis import LegendreFeatures, TensorLegendreBasis
from .problems import Elliptic2D, LevelFamily, SyntheticFamily

__all__ = [
    "AdaptiveMultilevel", "AdaptiveState", "DownwardClosedSet", "Elliptic2D", "LeastSquaresFit",
    "LegendreFeatures", "LevelFamily", "MultilevelLeastSquares", "MultilevelSchedule",
    "RateParams", "SyntheticFamily", "TensorLegendreBasis", "WeightedLeastSquares",
    "admissible_set", "block_indices", "build_schedule", "choose_levels", "classify_regime",
    "gramian_deviation", "run_adaptive", "run_multilevel", "sample_count_for",
    "total_degree_set", "work_estimate",
]
