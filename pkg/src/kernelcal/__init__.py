"""Calibrate stochastic simulation models by kernel score minimisation."""

from .calibrator import KernelScoreCalibrator
from .core_math import BoxDomain, chi2_quantile, project
from .estimator import CalibrationResult, SGDConfig, ScoreContext, calibrate
from .exceptions import (
    ConfigError,
    DegenerateDataError,
    DivergedError,
    DomainError,
    KernelCalError,
    NotPositiveDefiniteError,
    SingularMatrixError,
)
from .experiments import ExperimentConfig, builtin_configs, run_batch, run_experiment
from .inference import ConfidenceSet, SandwichEstimate, build_confidence_set, estimate_sandwich
from .kernels import KernelSpec, gaussian, laplacian, riesz
from .simulator import Dist, GG1Model, TargetSystem

__version__ = "0.1.0"

__all__ = [
    "KernelScoreCalibrator",
    "BoxDomain",
    "chi2_quantile",
    "project",
    "CalibrationResult",
    "SGDConfig",
    "ScoreContext",
    "calibrate",
    "ConfigError",
    "DegenerateDataError",
    "DivergedError",
    "DomainError",
    "KernelCalError",
    "NotPositiveDefiniteError",
    "SingularMatrixError",
    "ExperimentConfig",
    "builtin_configs",
    "run_batch",
    "run_experiment",
    "ConfidenceSet",
    "SandwichEstimate",
    "build_confidence_set",
    "estimate_sandwich",
    "KernelSpec",
    "gaussian",
    "laplacian",
    "riesz",
    "Dist",
    "GG1Model",
    "TargetSystem",
]
