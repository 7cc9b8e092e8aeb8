"""Learning coefficients and exact Bayesian quantities for multinomial mixtures.

The package computes, for small mixture models over finite count supports:

* closed-form learning coefficients (`rlct`),
* exact finite-sample free energies and generalization errors (`exact_bayes`),
* Monte Carlo free-energy and volume-scaling estimators (`estimators`),
* the loss-form algebra behind the closed forms (`kforms`),
* a reproducible experiment harness tying them together (`harness`).
"""
from .domain import (
    CountVector,
    Dataset,
    DimensionMismatchError,
    MixtureParams,
    SimplexVector,
    SupportViolationError,
    empirical_entropy,
    entropy,
    enumerate_support,
    kl_divergence,
    log_pmf_table,
    sample_dataset,
)
from .estimators import (
    BoxDomain,
    GibbsConfig,
    GibbsResult,
    LevelStarvationError,
    SlopeFit,
    TwoComponentSimplexDomain,
    VolumeScalingConfig,
    VolumeScalingResult,
    gibbs_posterior,
    mixture_kl_volume_problem,
    normal_form_volume_problem,
    slope_fit,
    temperature_ladder,
    thermo_integration,
    volume_scaling_lambda,
    wbic_estimate,
)
from .exact_bayes import (
    AssignmentPosterior,
    ConjugatePrior,
    EnumerationCapError,
    FreeEnergyValue,
    QuadratureError,
    assignment_posterior,
    gen_error_exact,
    log_marginal_enumeration,
    log_marginal_quadrature,
    predictive_pmf,
)
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    GnIdentityReport,
    PhaseSweepResult,
    run_gn_identity_check,
    run_lambda_experiment,
    run_phase_sweep,
)
from .rlct import (
    BinomialMixtureSpec,
    PriorSpec,
    RlctReport,
    RlctSource,
    phase_transition_alpha,
    predict_free_energy,
    predict_gen_error,
    rlct_binomial_bound,
    rlct_matsuda,
    rlct_regular,
    rlct_two_component,
)
from .seeds import derive_seed

__version__ = "0.1.0"

__all__ = [
    "AssignmentPosterior",
    "BinomialMixtureSpec",
    "BoxDomain",
    "ConjugatePrior",
    "CountVector",
    "Dataset",
    "DimensionMismatchError",
    "EnumerationCapError",
    "ExperimentConfig",
    "ExperimentResult",
    "FreeEnergyValue",
    "GibbsConfig",
    "GibbsResult",
    "GnIdentityReport",
    "LevelStarvationError",
    "MixtureParams",
    "PhaseSweepResult",
    "PriorSpec",
    "QuadratureError",
    "RlctReport",
    "RlctSource",
    "SimplexVector",
    "SlopeFit",
    "SupportViolationError",
    "TwoComponentSimplexDomain",
    "VolumeScalingConfig",
    "VolumeScalingResult",
    "assignment_posterior",
    "derive_seed",
    "empirical_entropy",
    "entropy",
    "enumerate_support",
    "gen_error_exact",
    "gibbs_posterior",
    "kl_divergence",
    "log_marginal_enumeration",
    "log_marginal_quadrature",
    "log_pmf_table",
    "mixture_kl_volume_problem",
    "normal_form_volume_problem",
    "phase_transition_alpha",
    "predict_free_energy",
    "predict_gen_error",
    "predictive_pmf",
    "rlct_binomial_bound",
    "rlct_matsuda",
    "rlct_regular",
    "rlct_two_component",
    "run_gn_identity_check",
    "run_lambda_experiment",
    "run_phase_sweep",
    "sample_dataset",
    "slope_fit",
    "temperature_ladder",
    "thermo_integration",
    "volume_scaling_lambda",
    "wbic_estimate",
]
