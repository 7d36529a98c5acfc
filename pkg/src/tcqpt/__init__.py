"""Driven non-Hermitian Tavis-Cummings model: steady states, stability and sweeps."""

__version__ = "0.1.0"

from .model import (ModelParams, ModelError, DegenerateCouplingError, matching_ratio,
                    gain_balance_rate, critical_coupling, build_effective, impose_regime,
                    load_config, dump_config)
from .steady import (MeanFieldState, SteadySolution, NoRootError, residual, solve_from,
                     classify, find_all, continue_branch, ParameterPath)

__all__ = [
    "ModelParams", "ModelError", "DegenerateCouplingError", "matching_ratio",
    "gain_balance_rate", "critical_coupling", "build_effective", "impose_regime",
    "load_config", "dump_config", "MeanFieldState", "SteadySolution", "NoRootError",
    "residual", "solve_from", "classify", "find_all", "continue_branch", "ParameterPath",
]
