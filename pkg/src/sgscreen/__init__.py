"""Strong screening rules for group SLOPE and sparse-group SLOPE."""
from .core import (ConfigurationError, Dataset, GroupStructure, InvalidArgumentError, NumericalError, build_groups,
                   make_dataset)
from .kkt import KktReport, gslope_kkt_check, sgs_kkt_check, slope_kkt_check
from .path import PathConfig, PathResult, compare_paths, fit_path_full, fit_path_screened, make_penalty
from .penalty import PenaltySpec, gslope_prox, slope_prox
from .solver import FitResult, SolverConfig, fit, fit_restricted
from .synth import SynthConfig, generate
from .weights import PenaltyWeights, WeightConfig, make_weights

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "Dataset", "FitResult", "GroupStructure", "InvalidArgumentError", "KktReport",
    "NumericalError", "PathConfig", "PathResult", "PenaltySpec", "PenaltyWeights", "SolverConfig",
    "SynthConfig", "WeightConfig", "build_groups", "compare_paths", "fit", "fit_path_full", "fit_path_screened",
    "fit_restricted", "generate", "gslope_kkt_check", "gslope_prox", "make_dataset", "make_penalty",
    "make_weights", "sgs_kkt_check", "slope_kkt_check", "slope_prox",
]
