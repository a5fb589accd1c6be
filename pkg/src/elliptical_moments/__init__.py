from elliptical_moments.blocks import (
    BlockCollection,
    random_pair_blocks,
    threshold_blocks,
    validate_blocks,
)
from elliptical_moments.errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    MomentNotFiniteError,
)
from elliptical_moments.estimators import (
    ConfidenceInterval,
    LocationScale,
    MomentEstimate,
    bae,
    blockwise_estimator,
    confidence_interval,
    ideal_estimator,
    mae,
    marginal_estimator,
    marginal_with_ci,
    sample_location_scale,
)
from elliptical_moments.harness import (
    ExperimentConfig,
    ReplicateRecord,
    emit,
    parse_config,
    replicate_rng,
    run_experiment,
    run_realized_xi_check,
    summarize,
)
from elliptical_moments.model import (
    EllipticalSpec,
    SampleMatrix,
    sample,
    sample_radial,
    sample_sphere,
    synthetic_covariance,
    theoretical_theta,
)
from elliptical_moments.radial import CustomRadial, Gaussian, RadialFamily, StudentT
from elliptical_moments.realized_xi import (
    ArchFit,
    PanelSeries,
    RealizedXiSeries,
    arch_fit,
    demean,
    estimate_realized_xi,
    factor_adjust,
    kernel_theta,
    realized_xi,
    simulate_factor_panel,
    smooth,
)
from elliptical_moments.robust import (
    HuberConfig,
    cross_validate_tau,
    huber_covariance,
    huber_location,
    huber_variance,
    robust_location_scale,
)
from elliptical_moments.special_functions import (
    bivariate_normal_power_cov,
    block_constant,
    h_factor,
    marginal_constant,
    radial_moment_ratio,
    variance_oracle_bae,
    variance_oracle_ie,
    variance_oracle_mae,
    variance_oracle_marginal,
)

__all__ = [
    "ArchFit",
    "BlockCollection",
    "ConfidenceInterval",
    "ConfigError",
    "ConvergenceError",
    "CustomRadial",
    "DomainError",
    "EllipticalSpec",
    "ExperimentConfig",
    "Gaussian",
    "HuberConfig",
    "LocationScale",
    "MomentEstimate",
    "MomentNotFiniteError",
    "PanelSeries",
    "RadialFamily",
    "RealizedXiSeries",
    "ReplicateRecord",
    "SampleMatrix",
    "StudentT",
    "arch_fit",
    "bae",
    "bivariate_normal_power_cov",
    "block_constant",
    "blockwise_estimator",
    "confidence_interval",
    "cross_validate_tau",
    "demean",
    "emit",
    "estimate_realized_xi",
    "factor_adjust",
    "h_factor",
    "huber_covariance",
    "huber_location",
    "huber_variance",
    "ideal_estimator",
    "kernel_theta",
    "mae",
    "marginal_constant",
    "marginal_estimator",
    "marginal_with_ci",
    "parse_config",
    "radial_moment_ratio",
    "random_pair_blocks",
    "realized_xi",
    "replicate_rng",
    "robust_location_scale",
    "run_experiment",
    "run_realized_xi_check",
    "sample",
    "sample_location_scale",
    "sample_radial",
    "sample_sphere",
    "simulate_factor_panel",
    "smooth",
    "summarize",
    "synthetic_covariance",
    "theoretical_theta",
    "threshold_blocks",
    "validate_blocks",
    "variance_oracle_bae",
    "variance_oracle_ie",
    "variance_oracle_mae",
    "variance_oracle_marginal",
]


def __dir__():
    return __all__


__version__ = "0.0.1"
