"""Bayesian variable selection in Gaussian linear regression under Zellner
g-priors: Gibbs sampling over model space, empirical (Hansen-Hurwitz) and
renormalized estimators, and exact parallel enumeration."""

from .bayesfactor import (
    GPriorSpec,
    LogBayesFactor,
    log_bf,
    log_bf_value,
    log_posterior_unnorm,
    log_prior_g_density,
    sample_prior_g,
)
from .errors import (
    DataError,
    ModelspaceError,
    NumericalError,
    SingularModelError,
    UsageError,
)
from .estimators import (
    EstimateWithSE,
    PosteriorSummary,
    QuantityOfInterest,
    dedupe_models,
    find_hpm,
    find_mpm,
    hh_dimension,
    hh_estimate,
    hh_inclusion,
    hh_predictive_mean,
    indicator_of_dimension,
    indicator_of_model,
    indicator_of_variable,
    rank_models,
    renormalized_estimate,
    summarize_trace,
    topk_mass_log10,
)
from .exact import (
    ExactResult,
    count_models_above,
    enumerate_exact,
    enumerate_shard,
    exact_quantity,
    reduce_shards,
)
from .linmodel import (
    Dataset,
    FitState,
    ModelIndex,
    add_variable,
    delete_variable,
    expand_design,
    fit_empty,
    fit_model,
    load_csv,
    make_dataset,
    sse_direct,
)
from .sampler import (
    ChainTrace,
    SamplerConfig,
    gibbs_component_prob,
    gibbs_sweep,
    mh_step_g,
    run_chain,
)

__version__ = "0.1.0"
