from .report import CSV_HEADER, ScalingReport, Series, SweepConfig, Verdict
from .scaling import (
    run_bias_upper_check,
    run_depth_dependence,
    run_gaussian_norm_check,
    run_pointwise_scaling,
    run_shallow_matching,
    run_upper_boundedness,
)
from .suite import CHECK_NAMES, DEFAULT_SEED, run_verification_suite
from .theta import run_theta_statistics, theta_pair, theta_vectors

SWEEPS = {
    "pointwise": run_pointwise_scaling,
    "shallow": run_shallow_matching,
    "depth": run_depth_dependence,
    "upper": run_upper_boundedness,
    "bias_upper": run_bias_upper_check,
}

__all__ = [
    "CHECK_NAMES",
    "CSV_HEADER",
    "DEFAULT_SEED",
    "SWEEPS",
    "ScalingReport",
    "Series",
    "SweepConfig",
    "Verdict",
    "run_bias_upper_check",
    "run_depth_dependence",
    "run_gaussian_norm_check",
    "run_pointwise_scaling",
    "run_shallow_matching",
    "run_theta_statistics",
    "run_upper_boundedness",
    "run_verification_suite",
    "theta_pair",
    "theta_vectors",
]
