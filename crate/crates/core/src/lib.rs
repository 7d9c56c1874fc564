//! Probabilistic predictive models.
//!
//! A model pairs an outcome distribution `G(μ, σ)` with a mean function and
//! link (`μ = l_μ(f_μ(x; θ_μ))`), a variance function and link
//! (`σ = l_σ(f_σ(·; θ_σ))`), and priors on every parameter. Fitting by MCMC
//! yields posterior draws; pushing those through the model gives full
//! predictive distributions, intervals and tail probabilities, which can be
//! averaged across models, pooled across seeds or imputed datasets, and, for
//! binary outcomes, decomposed into aleatoric and epistemic parts.

pub mod data;
pub mod distributions;
pub mod error;
pub mod functions;
pub mod inference;
pub mod prediction;
pub mod rng;
pub mod simulate;
pub mod special;
pub mod uncertainty;

pub use data::Dataset;
pub use distributions::{DistributionSpec, Family};
pub use error::{Error, Result};
pub use functions::{Link, MeanForm, VarianceForm, VarianceFunction};
pub use inference::{
    fit, fit_ensemble, plug_in_fit, FitConfig, Likelihood, ModelSpec, PosteriorDraws,
};
pub use rng::{derive_seed, rng_from_seed, RandomSource};
