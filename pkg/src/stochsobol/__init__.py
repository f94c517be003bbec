"""Sobol' indices of stochastic models via per-realisation surrogates."""
__version__ = "0.1.0"

from .mars import AdditiveSurrogate, MarsConfig, anova
from .models import GFunction, StochasticModel, ToyModel, get_model, register
from .pce import PcSurrogate, fit_pc, pc_sobol
from .pipeline import Experiment, convergence_study, distribution_summary, run_algorithm2, run_time_resolved
from .sampling import ParameterSpace, RngStream, lhs
from .sobol import IndexSample, IndexVector, moments, normalized_error, saltelli

__all__ = [
    "AdditiveSurrogate",
    "Experiment",
    "GFunction",
    "IndexSample",
    "IndexVector",
    "MarsConfig",
    "ParameterSpace",
    "PcSurrogate",
    "RngStream",
    "StochasticModel",
    "ToyModel",
    "anova",
    "convergence_study",
    "distribution_summary",
    "fit_pc",
    "get_model",
    "lhs",
    "moments",
    "normalized_error",
    "pc_sobol",
    "register",
    "run_algorithm2",
    "run_time_resolved",
    "saltelli",
]
