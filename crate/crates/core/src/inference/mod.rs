//! Posterior sampling by componentwise adaptive random-walk Metropolis,
//! MAP point estimates, convergence diagnostics and seed ensembles.

mod diagnostics;
mod draws;
mod model;
mod optimize;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

pub use diagnostics::{diagnostics, rank_normalized, Diagnostics, RHAT_FLAG_THRESHOLD};
pub use draws::PosteriorDraws;
pub use model::{Likelihood, ModelSpec};
pub use optimize::{plug_in_fit, plug_in_fit_with, PlugInConfig};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub chains: usize,
    pub warmup: usize,
    pub samples: usize,
    /// Starting random-walk step size for every parameter.
    pub initial_scale: f64,
    pub target_acceptance: f64,
    /// Chain `c` is seeded with `seed + c`.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 1000,
            samples: 1000,
            initial_scale: 0.1,
            target_acceptance: 0.30,
            seed: 1,
        }
    }
}

impl FitConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::domain(
                "at least 2 chains are needed for diagnostics",
            ));
        }
        if self.samples < 1 {
            return Err(Error::domain("at least one sampling iteration is needed"));
        }
        if !(self.initial_scale > 0.0 && self.initial_scale.is_finite()) {
            return Err(Error::domain("initial proposal scale must be positive"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::domain("target acceptance must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Proposal scales are adapted once per batch of this many sweeps.
const ADAPT_BATCH: usize = 25;
const INIT_ATTEMPTS: usize = 1000;
/// Finite-density prior draws compared when choosing a chain's start.
const INIT_CANDIDATES: usize = 10;
/// Fractions of warmup at which the proposal directions are re-estimated
/// from the draws since the previous boundary (the first window starts at
/// the first entry, discarding the initial transient).
const BASIS_BOUNDARIES: [f64; 4] = [0.1, 0.3, 0.55, 0.8];
/// Warmup too short to estimate a covariance keeps the coordinate axes.
const MIN_BASIS_WARMUP: usize = 100;

struct ChainOutput {
    rows: Vec<Vec<f64>>,
    acceptance: f64,
}

/// Draws from the posterior of `model` given `data`.
///
/// Each chain starts from an independent prior draw and updates one
/// direction at a time with a Gaussian random-walk proposal. During warmup
/// the step size along each direction is adapted toward the target
/// acceptance, and the directions themselves are rotated onto the
/// principal axes of the warmup draws so that strongly correlated
/// parameters still mix. Both are frozen for the `samples` retained sweeps.
/// Chains run in parallel; output depends only on the seed.
pub fn fit(model: &ModelSpec, data: &Dataset, config: &FitConfig) -> Result<PosteriorDraws> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::domain("cannot fit an empty dataset"));
    }
    // Structural problems (feature mismatch) surface here as errors.
    let center: Vec<f64> = model.priors().iter().map(|p| p.mu()).collect();
    model.log_posterior(data, &center)?;

    let outputs: Vec<ChainOutput> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(model, data, config, c))
        .collect::<Result<_>>()?;

    let acceptance: Vec<f64> = outputs.iter().map(|o| o.acceptance).collect();
    let mut rows = Vec::with_capacity(config.chains * config.samples);
    let mut chain = Vec::with_capacity(config.chains * config.samples);
    for (c, out) in outputs.into_iter().enumerate() {
        chain.extend(std::iter::repeat_n(c, out.rows.len()));
        rows.extend(out.rows);
    }
    let draws = PosteriorDraws::new(model.parameter_names(), rows, chain)?;
    let diag = diagnostics(&draws).ok().map(|mut d| {
        d.acceptance_rate = acceptance.clone();
        d
    });
    if acceptance.iter().all(|&a| a == 0.0) {
        return Err(Error::Fit {
            message: "every chain rejected all proposals after warmup".into(),
            diagnostics: diag.map(Box::new),
        });
    }
    Ok(draws.with_sampler_output(acceptance, diag))
}

fn run_chain(
    model: &ModelSpec,
    data: &Dataset,
    config: &FitConfig,
    c: usize,
) -> Result<ChainOutput> {
    let mut rng = rng_from_seed(config.seed.wrapping_add(c as u64));
    let p = model.parameter_count();

    // Start from the most probable of a few independent prior draws, which
    // keeps chains out of far-away plateaus of the likelihood.
    let mut theta = Vec::new();
    let mut lp = f64::NEG_INFINITY;
    let mut found = 0;
    for _ in 0..INIT_ATTEMPTS {
        let candidate: Vec<f64> = model
            .priors()
            .iter()
            .map(|d| d.sample_one(&mut rng))
            .collect();
        let lp_candidate = model.log_posterior(data, &candidate)?;
        if lp_candidate.is_finite() {
            if lp_candidate > lp {
                theta = candidate;
                lp = lp_candidate;
            }
            found += 1;
            if found == INIT_CANDIDATES {
                break;
            }
        }
    }
    if !lp.is_finite() {
        return Err(Error::Fit {
            message: format!(
                "chain {c}: no prior draw with finite log posterior in {INIT_ATTEMPTS} attempts"
            ),
            diagnostics: None,
        });
    }

    let mut basis = identity(p);
    let mut log_scale = vec![config.initial_scale.ln(); p];
    let mut accepted = vec![0usize; p];
    let mut batch = 0usize;

    let boundaries: Vec<usize> = if config.warmup >= MIN_BASIS_WARMUP {
        BASIS_BOUNDARIES
            .iter()
            .map(|f| (f * config.warmup as f64) as usize)
            .collect()
    } else {
        Vec::new()
    };
    let mut window: Vec<Vec<f64>> = Vec::new();

    for it in 0..config.warmup {
        sweep(
            model,
            data,
            &mut theta,
            &mut lp,
            &basis,
            &log_scale,
            &mut accepted,
            &mut rng,
        )?;
        if (it + 1) % ADAPT_BATCH == 0 {
            batch += 1;
            let gain = (3.0 / (batch as f64).sqrt()).min(1.5);
            for j in 0..p {
                let rate = accepted[j] as f64 / ADAPT_BATCH as f64;
                log_scale[j] += gain * (rate - config.target_acceptance);
                accepted[j] = 0;
            }
        }
        if boundaries.first().is_some_and(|&b| it + 1 > b) {
            window.push(theta.clone());
        }
        if boundaries[1..].contains(&(it + 1)) {
            if let Some(b) = principal_axes(&window) {
                basis = b;
                // Unit steps along whitened axes are near the conditional sd.
                log_scale = vec![0.0; p];
                accepted.iter_mut().for_each(|a| *a = 0);
                batch = 0;
            }
            window.clear();
        }
    }

    accepted.iter_mut().for_each(|a| *a = 0);
    let mut rows = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        sweep(
            model,
            data,
            &mut theta,
            &mut lp,
            &basis,
            &log_scale,
            &mut accepted,
            &mut rng,
        )?;
        rows.push(theta.clone());
    }
    let acceptance = accepted.iter().sum::<usize>() as f64 / (p * config.samples) as f64;
    Ok(ChainOutput { rows, acceptance })
}

fn identity(p: usize) -> Vec<Vec<f64>> {
    (0..p)
        .map(|j| (0..p).map(|k| if j == k { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Eigenvectors of the sample covariance of `draws`, each scaled by the
/// square root of its eigenvalue. `None` when the window is too short or
/// the covariance is degenerate (e.g. a chain that never moved).
fn principal_axes(draws: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let p = draws.first()?.len();
    let n = draws.len();
    if n < 2 * p + 10 {
        return None;
    }
    let mean: Vec<f64> = (0..p)
        .map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / n as f64)
        .collect();
    let cov = nalgebra::DMatrix::from_fn(p, p, |a, b| {
        draws
            .iter()
            .map(|d| (d[a] - mean[a]) * (d[b] - mean[b]))
            .sum::<f64>()
            / (n as f64 - 1.0)
    });
    let eig = cov.symmetric_eigen();
    let largest = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if !(largest > 0.0 && largest.is_finite())
        || eig.eigenvalues.iter().any(|l| !(*l > 1e-12 * largest))
    {
        return None;
    }
    Some(
        (0..p)
            .map(|k| {
                let s = eig.eigenvalues[k].sqrt();
                eig.eigenvectors.column(k).iter().map(|v| v * s).collect()
            })
            .collect(),
    )
}

/// One Metropolis sweep: a Gaussian random-walk step along each basis
/// direction in turn.
#[allow(clippy::too_many_arguments)]
fn sweep<R: Rng>(
    model: &ModelSpec,
    data: &Dataset,
    theta: &mut [f64],
    lp: &mut f64,
    basis: &[Vec<f64>],
    log_scale: &[f64],
    accepted: &mut [usize],
    rng: &mut R,
) -> Result<()> {
    let mut proposal = theta.to_vec();
    for (j, dir) in basis.iter().enumerate() {
        let z: f64 = StandardNormal.sample(rng);
        let step = log_scale[j].exp() * z;
        for (k, d) in dir.iter().enumerate() {
            proposal[k] = theta[k] + step * d;
        }
        let lp_new = model.log_posterior(data, &proposal)?;
        let u: f64 = rng.random();
        if lp_new.is_finite() && u.ln() < lp_new - *lp {
            *lp = lp_new;
            theta.copy_from_slice(&proposal);
            accepted[j] += 1;
        }
    }
    Ok(())
}

/// One independent fit per seed, in seed order. Fits run in parallel with
/// results identical to sequential execution.
pub fn fit_ensemble(
    model: &ModelSpec,
    data: &Dataset,
    seeds: &[u64],
    config: &FitConfig,
) -> Result<Vec<PosteriorDraws>> {
    if seeds.is_empty() {
        return Err(Error::domain("an ensemble needs at least one seed"));
    }
    seeds
        .par_iter()
        .map(|&seed| {
            fit(model, data, &config.with_seed(seed)).map_err(|e| Error::Ensemble {
                seed,
                source: Box::new(e),
            })
        })
        .collect()
}
