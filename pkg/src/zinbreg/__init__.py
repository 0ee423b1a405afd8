"""Bayesian zero-inflated negative binomial regression for count matrices
with covariates: group-discriminating feature selection and
feature-covariate association estimation via MCMC."""

from .data import (
    CountMatrix,
    CovariateMatrix,
    Dataset,
    GroupAssignment,
    Hyperparameters,
    ProposalScales,
    filter_low_abundance,
    standardize_covariates,
    validate_inputs,
)
from .evaluate import ScoreReport, mcc, roc_auc, roc_points, score_run
from .inference import (
    ConcordanceReport,
    FdrSelection,
    PosteriorSummary,
    bayesian_fdr_threshold,
    chain_concordance,
    compute_ppi,
    summarize,
)
from .likelihood import (
    TaxonParams,
    log_prior_terms,
    mean_alpha,
    nb_log_pmf,
    taxon_log_lik,
    zinb_log_pmf,
)
from .normalization import (
    METHODS,
    SizeFactors,
    estimate,
    estimate_css,
    estimate_gmpr,
    estimate_q75,
    estimate_rle,
    estimate_tmm,
)
from .sampler import (
    ChainConfig,
    ChainTrace,
    ModelState,
    init_state,
    run_chain,
    run_chains_parallel,
    update_delta_beta,
    update_gamma_mu,
    update_mu0,
    update_phi,
    update_r,
)
from .simulate import SimConfig, SimTruth, dirichlet_draw, generate, generate_zinb

__version__ = "0.1.0"
