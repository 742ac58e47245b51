//! Bayesian phylogenetic inference: two-state CTMC with gamma rate
//! variation and ascertainment correction, an MCMC sampler over trees and
//! parameters, and posterior summarization.

pub mod ctmc;
pub mod likelihood;
pub mod mcc;
pub mod mcmc;

pub use ctmc::{transition_matrix, CtmcParams, GammaRates, GAMMA_CATEGORIES};
pub use likelihood::{
    log_likelihood, CharData, CharGroup, KindParams, TreeTables, KIND_CLASS_LABEL,
    KIND_SOUNDCLASS,
};
pub use mcc::maximum_clade_credibility;
pub use mcmc::{
    mcmc_sample, simulate_characters, McmcConfig, MoveWeights, PosteriorEntry, PosteriorSample,
    BRANCH_PRIOR_RATE, SHAPE_PRIOR_RATE,
};
