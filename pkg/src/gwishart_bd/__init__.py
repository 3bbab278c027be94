"""Birth-death MCMC for Gaussian graphical models with a closed-form
approximation to the G-Wishart normalizing-constant ratio."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .bdmcmc import (
    ChainState,
    PosteriorSummary,
    RatioProvider,
    RunConfig,
    Trace,
    birth_rate,
    death_rate,
    edge_posteriors,
    h_factor,
    run,
    select_graph,
    step,
)
from .graph import Graph, decompose, generate, is_decomposable, path_profile, perfect_sequence
from .gwishart import (
    GWishartParams,
    NormEstimate,
    cholesky_completion,
    error_bound,
    exact_log_norm_decomposable,
    log_unnormalized_density,
    mc_log_norm,
    mc_ratio,
    ratio_approx,
    theorem_gap_mc,
)
from .sampler import SamplerConfig, sample_gwishart, sample_wishart
from .simharness import ExperimentConfig, metrics, roc, run_experiment, simulate_dataset
