"""Computable Stein discrepancy certificates for sample quality."""

__version__ = "0.1.0"

from .discrepancy import SampleMeasure, discrepancy_report, stein_discrepancy
from .errors import ConfigError, InputError, NumericError, SteinGaugeError
from .factors import SmoothnessBudget, SteinFactors, classical_factors, logistic_factors
from .langevin import CouplingGeometry, DiffusionConfig, estimate_u_h, run_coupled, verify_coupling
from .metrics import bounded_lipschitz_upper, certify, expected_gaussian_norm, smoothed_function, wasserstein_upper
from .oracles import SmoothFunctionOracle, verify_gap_inequalities
from .targets import GaussianTarget, LogisticTarget, grad_log_p, smoothness_constants

__all__ = [
    "ConfigError",
    "CouplingGeometry",
    "DiffusionConfig",
    "GaussianTarget",
    "InputError",
    "LogisticTarget",
    "NumericError",
    "SampleMeasure",
    "SmoothFunctionOracle",
    "SmoothnessBudget",
    "SteinFactors",
    "SteinGaugeError",
    "bounded_lipschitz_upper",
    "certify",
    "classical_factors",
    "discrepancy_report",
    "estimate_u_h",
    "expected_gaussian_norm",
    "grad_log_p",
    "logistic_factors",
    "run_coupled",
    "smoothed_function",
    "smoothness_constants",
    "stein_discrepancy",
    "verify_coupling",
    "verify_gap_inequalities",
    "wasserstein_upper",
]
