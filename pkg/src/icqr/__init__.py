"""Quantile regression for interval-censored time-to-event data.

Observed times may be exact, bracketed between two assessment times, or
censored on one side. The estimator redistributes each censored subject's
mass to its bracket endpoints using a locally estimated conditional
distribution, then solves a weighted check-loss program.
"""
from .data import CensoringClass, Dataset, Observation, QuantileFit, check_tau, classify, validate
from .errors import IcqrError, NumericalError, ValidationError
from .inference import (
    BootstrapConfig,
    InferenceResult,
    SurvivalBands,
    bootstrap,
    multiplier_draws,
    perturb_fit,
    survival_bands,
)
from .kernels import KernelSpec, auto_kernel_spec, nw_weight_matrix, nw_weights, silverman_bandwidth
from .npmle import (
    KernelCdfProvider,
    StepCdf,
    effective_time,
    em_e_step,
    em_m_step,
    fit_local_cdf,
    fit_weighted_cdf,
    self_consistency_residual,
    support_grid,
    turnbull,
)
from .pipeline import EstimatorSpec, FitContext, fit, quantile_process
from .simulate import SimScenario, TRUE_BETA, calibrate_p0, error_quantile, generate
from .solver import CheckLossProblem, check_loss, solve, subgradient, subgradient_bound
from .study import StudyMetrics, StudyResult, censoring_sweep, run_study
from .weighting import (
    AugmentedData,
    CdfProvider,
    build_augmented,
    build_zfd_augmented,
    default_m_star,
    endpoint_cdf_table,
    is_indeterminate,
    local_weight,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentedData",
    "BootstrapConfig",
    "CdfProvider",
    "CensoringClass",
    "CheckLossProblem",
    "Dataset",
    "EstimatorSpec",
    "FitContext",
    "IcqrError",
    "InferenceResult",
    "KernelCdfProvider",
    "KernelSpec",
    "NumericalError",
    "Observation",
    "QuantileFit",
    "SimScenario",
    "StepCdf",
    "StudyMetrics",
    "StudyResult",
    "SurvivalBands",
    "TRUE_BETA",
    "ValidationError",
    "auto_kernel_spec",
    "bootstrap",
    "build_augmented",
    "build_zfd_augmented",
    "calibrate_p0",
    "censoring_sweep",
    "check_loss",
    "check_tau",
    "classify",
    "default_m_star",
    "effective_time",
    "em_e_step",
    "em_m_step",
    "endpoint_cdf_table",
    "error_quantile",
    "fit",
    "fit_local_cdf",
    "fit_weighted_cdf",
    "generate",
    "is_indeterminate",
    "local_weight",
    "multiplier_draws",
    "nw_weight_matrix",
    "nw_weights",
    "perturb_fit",
    "quantile_process",
    "run_study",
    "self_consistency_residual",
    "silverman_bandwidth",
    "solve",
    "subgradient",
    "subgradient_bound",
    "support_grid",
    "survival_bands",
    "turnbull",
    "validate",
]
