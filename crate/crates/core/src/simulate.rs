//! Generators for the saturating dose-response example and the two-feature
//! classification demo, plus deterministic subsampling.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::functions::{Link, MeanForm};
use crate::rng::rng_from_seed;

/// How the x values of a simulated dataset are placed on [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XPlacement {
    /// Evenly spaced, endpoints included.
    #[default]
    Grid,
    /// Independent uniform draws.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub n: usize,
    pub theta1: f64,
    pub theta2: f64,
    pub sigma: f64,
    pub seed: u64,
    pub placement: XPlacement,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 100,
            theta1: 3.25,
            theta2: 0.2,
            sigma: 0.1,
            seed: 1,
            placement: XPlacement::Grid,
        }
    }
}

/// `y ~ Normal(θ2 + tanh(θ1·x / 2), σ)` on an even grid of `n` points in [0, 1].
///
/// `sigma = 0` gives noiseless data.
pub fn simulate_dataset(
    n: usize,
    theta1: f64,
    theta2: f64,
    sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    simulate(&SimulationConfig {
        n,
        theta1,
        theta2,
        sigma,
        seed,
        placement: XPlacement::Grid,
    })
}

pub fn simulate(cfg: &SimulationConfig) -> Result<Dataset> {
    if cfg.n == 0 {
        return Err(Error::domain("simulation needs n >= 1"));
    }
    if !(cfg.sigma >= 0.0 && cfg.sigma.is_finite()) {
        return Err(Error::domain(format!(
            "sigma must be nonnegative, got {}",
            cfg.sigma
        )));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let x: Vec<f64> = match cfg.placement {
        XPlacement::Grid if cfg.n == 1 => vec![0.0],
        XPlacement::Grid => (0..cfg.n).map(|i| i as f64 / (cfg.n - 1) as f64).collect(),
        XPlacement::Random => (0..cfg.n).map(|_| rng.random::<f64>()).collect(),
    };
    let theta = [cfg.theta1, cfg.theta2];
    let y = x
        .iter()
        .map(|&xi| {
            let mu = MeanForm::TrueModel.eval_scalar(&theta, xi)?;
            let z: f64 = StandardNormal.sample(&mut rng);
            Ok(mu + cfg.sigma * z)
        })
        .collect::<Result<Vec<_>>>()?;
    let note = format!(
        "simulate(n={}, theta1={}, theta2={}, sigma={}, seed={}, x={:?})",
        cfg.n, cfg.theta1, cfg.theta2, cfg.sigma, cfg.seed, cfg.placement
    );
    Ok(Dataset::new(x, y)?.with_provenance(note))
}

/// Keeps rows k, 2k, 3k, … (1-based), preserving order.
pub fn subsample_every_kth(data: &Dataset, k: usize) -> Result<Dataset> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if k > data.len() {
        return Err(Error::EmptyDataset(format!(
            "every {k}th row of a {}-row dataset selects nothing",
            data.len()
        )));
    }
    let idx: Vec<usize> = (1..=data.len() / k).map(|j| j * k - 1).collect();
    Ok(data.select(&idx))
}

/// Two features uniform on [−3, 3]², labels `Bernoulli(logistic(θ0 + θ1·x1 + θ2·x2))`.
pub fn simulate_classification(n: usize, coefficients: [f64; 3], seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::domain("classification simulation needs n >= 2"));
    }
    let mut rng = rng_from_seed(seed);
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x1 = rng.random_range(-3.0..=3.0);
        let x2 = rng.random_range(-3.0..=3.0);
        let p = Link::Logit.apply(coefficients[0] + coefficients[1] * x1 + coefficients[2] * x2);
        x.extend([x1, x2]);
        y.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
    }
    let note = format!("simulate_classification(n={n}, theta={coefficients:?}, seed={seed})");
    Ok(Dataset::with_features(2, x, y)?.with_provenance(note))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_origin_equals_theta2() {
        let d = simulate_dataset(11, 3.25, 0.2, 0.0, 1).unwrap();
        assert_eq!(d.x()[0], 0.0);
        assert_eq!(d.y()[0], 0.2);
        assert_eq!(*d.x().last().unwrap(), 1.0);
    }

    #[test]
    fn residual_sd_matches_sigma() {
        let d = simulate_dataset(100, 3.25, 0.2, 0.1, 42).unwrap();
        let resid: Vec<f64> = d
            .rows()
            .map(|(x, y)| y - MeanForm::TrueModel.eval_scalar(&[3.25, 0.2], x[0]).unwrap())
            .collect();
        let sd = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt();
        assert!((0.08..=0.12).contains(&sd), "{sd}");
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(
            simulate_dataset(50, 3.25, 0.2, 0.1, 9).unwrap(),
            simulate_dataset(50, 3.25, 0.2, 0.1, 9).unwrap()
        );
        assert_ne!(
            simulate_dataset(50, 3.25, 0.2, 0.1, 9).unwrap(),
            simulate_dataset(50, 3.25, 0.2, 0.1, 10).unwrap()
        );
        let c = |s| simulate_classification(30, [0.0, 1.0, -1.0], s).unwrap();
        assert_eq!(c(3), c(3));
    }

    #[test]
    fn invalid_sigma_and_n() {
        assert!(simulate_dataset(10, 3.25, 0.2, -1.0, 1).is_err());
        assert!(simulate_dataset(0, 3.25, 0.2, 0.1, 1).is_err());
    }

    #[test]
    fn random_placement_stays_in_unit_interval() {
        let cfg = SimulationConfig {
            placement: XPlacement::Random,
            ..Default::default()
        };
        let d = simulate(&cfg).unwrap();
        assert!(d.x().iter().all(|&x| (0.0..1.0).contains(&x)));
        assert_ne!(d.x()[1] - d.x()[0], d.x()[2] - d.x()[1]);
    }

    #[test]
    fn every_kth() {
        let d = simulate_dataset(100, 3.25, 0.2, 0.1, 1).unwrap();
        let s = subsample_every_kth(&d, 8).unwrap();
        assert_eq!(s.len(), 12);
        assert_eq!(s.x()[0], d.x()[7]);
        assert_eq!(s.y()[11], d.y()[95]);
        assert_eq!(subsample_every_kth(&d, 1).unwrap(), d);
        assert_eq!(subsample_every_kth(&d, 100).unwrap().len(), 1);
        assert!(matches!(
            subsample_every_kth(&d, 101),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn classification_generator() {
        let d = simulate_classification(10_000, [0.0, 0.0, 0.0], 4).unwrap();
        let mean = d.y().iter().sum::<f64>() / d.len() as f64;
        assert!((mean - 0.5).abs() < 0.05);
        assert!(d.x().iter().all(|v| (-3.0..=3.0).contains(v)));

        let d = simulate_classification(2000, [0.0, 10.0, -10.0], 5).unwrap();
        let far: Vec<f64> = d
            .rows()
            .filter(|(x, _)| x[0] - x[1] > 1.0)
            .map(|(_, y)| y)
            .collect();
        assert!(!far.is_empty());
        assert!(far.iter().sum::<f64>() / far.len() as f64 > 0.99);
    }
}
