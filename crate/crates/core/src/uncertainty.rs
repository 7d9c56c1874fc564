//! Measurement-error propagation and classification uncertainty.
//!
//! Training-data error is handled by generating several perturbed copies of
//! the data, fitting each, and pooling the predictions. Test-input error is
//! propagated by sampling the input and pairing each input draw with a
//! posterior draw. For binary outcomes the spread of predicted probabilities
//! is split into an outcome (aleatoric) part and a parameter (epistemic) part.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::functions::Link;
use crate::inference::{ModelSpec, PosteriorDraws};
use crate::prediction::{
    average_predictions, empirical_quantile, posterior_predictive, PredictiveDistribution,
    Provenance,
};
use crate::special::norm_quantile;

/// A measured value with its standard error; an error of zero means the
/// value is known exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredValue {
    value: f64,
    standard_error: f64,
}

impl MeasuredValue {
    pub fn new(value: f64, standard_error: f64) -> Result<Self> {
        if !(standard_error >= 0.0 && standard_error.is_finite()) {
            return Err(Error::domain(format!(
                "standard error must be nonnegative, got {standard_error}"
            )));
        }
        Ok(Self {
            value,
            standard_error,
        })
    }

    pub fn exact(value: f64) -> Self {
        Self {
            value,
            standard_error: 0.0,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn standard_error(&self) -> f64 {
        self.standard_error
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.standard_error == 0.0 {
            return self.value;
        }
        let z: f64 = StandardNormal.sample(rng);
        self.value + self.standard_error * z
    }
}

/// `m` copies of `data` in which every value with a standard error is
/// replaced by an independent draw from `Normal(value, se)`.
pub fn generate_datasets<R: Rng>(data: &Dataset, m: usize, rng: &mut R) -> Result<Vec<Dataset>> {
    if m == 0 {
        return Err(Error::domain("need at least one generated dataset"));
    }
    let n = data.len();
    let zeros = vec![0.0; n];
    let x_se = data.x_se().unwrap_or(&zeros);
    let y_se = data.y_se().unwrap_or(&zeros);
    if let Some(bad) = x_se.iter().chain(y_se).find(|&&s| !(s >= 0.0)) {
        return Err(Error::domain(format!(
            "standard errors must be nonnegative, got {bad}"
        )));
    }
    let features = data.features();
    let out = (0..m)
        .map(|_| {
            let mut x = data.x().to_vec();
            let mut y = data.y().to_vec();
            for i in 0..n {
                if features == 1 {
                    x[i] = MeasuredValue {
                        value: x[i],
                        standard_error: x_se[i],
                    }
                    .draw(rng);
                }
                y[i] = MeasuredValue {
                    value: y[i],
                    standard_error: y_se[i],
                }
                .draw(rng);
            }
            data.replace_values(x, y)
        })
        .collect();
    Ok(out)
}

/// Predictive distribution at an input known only up to its standard error.
///
/// Draws `n_x` inputs from `Normal(x, se)`; each is paired with one
/// posterior draw (the draws in order when the counts match, otherwise
/// sampled with replacement) and yields one outcome.
pub fn propagate_test_error<R: Rng>(
    model: &ModelSpec,
    draws: &PosteriorDraws,
    x: MeasuredValue,
    n_x: usize,
    rng: &mut R,
) -> Result<PredictiveDistribution> {
    if n_x == 0 {
        return Err(Error::domain("need at least one input draw"));
    }
    let paired = n_x == draws.n_draws();
    let mut samples = Vec::with_capacity(n_x);
    for k in 0..n_x {
        let xk = x.draw(rng);
        let row = if paired {
            k
        } else {
            rng.random_range(0..draws.n_draws())
        };
        let g = model.predictive_distribution(draws.row(row), &[xk])?;
        samples.push(g.sample_one(rng));
    }
    Ok(PredictiveDistribution::from_samples(
        x.value,
        samples,
        Provenance {
            model_id: format!("{:?} with input error {}", model.mean(), x.standard_error),
            parameter_draws: draws.n_draws(),
            per_draw: 1,
            truncated: model.truncation().is_some(),
        },
    ))
}

/// Equal-weight pool of the posterior predictives of several fits.
pub fn pool_ensemble_predictions<R: Rng>(
    fits: &[PosteriorDraws],
    model: &ModelSpec,
    x: f64,
    rng: &mut R,
) -> Result<PredictiveDistribution> {
    if fits.is_empty() {
        return Err(Error::domain("need at least one fit to pool"));
    }
    let preds = fits
        .iter()
        .map(|d| posterior_predictive(model, d, x, 1, rng))
        .collect::<Result<Vec<_>>>()?;
    average_predictions(&preds, None)
}

/// Per-draw success probabilities at one input and the resulting
/// predictive probability of the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrediction {
    pub p_draws: Vec<f64>,
    pub y_predictive: f64,
}

pub fn classify_predictive(
    model: &ModelSpec,
    draws: &PosteriorDraws,
    x: &[f64],
) -> Result<ClassPrediction> {
    if !model.is_classification() {
        return Err(Error::domain("classification needs a Bernoulli model"));
    }
    if x.len() != model.mean().feature_count() {
        return Err(Error::domain(format!(
            "query has {} features, model expects {}",
            x.len(),
            model.mean().feature_count()
        )));
    }
    let p_draws = draws
        .rows()
        .map(|theta| model.mu(theta, x))
        .collect::<Result<Vec<_>>>()?;
    let y_predictive = p_draws.iter().sum::<f64>() / p_draws.len() as f64;
    Ok(ClassPrediction {
        p_draws,
        y_predictive,
    })
}

/// Outcome/parameter split of the uncertainty in a binary prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationUncertainty {
    pub mu_bar: f64,
    /// Sample standard deviation of the probability draws (divisor T − 1).
    pub sigma_mu: f64,
    /// Mean of p(1 − p).
    pub aleatoric: f64,
    /// Mean of (p − p̄)², divisor T.
    pub epistemic: f64,
}

pub fn decompose_uncertainty(p_draws: &[f64]) -> Result<ClassificationUncertainty> {
    if p_draws.len() < 2 {
        return Err(Error::domain("decomposition needs at least 2 draws"));
    }
    if let Some(bad) = p_draws.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::domain(format!(
            "probability draw outside [0, 1]: {bad}"
        )));
    }
    let t = p_draws.len() as f64;
    let mu_bar = p_draws.iter().sum::<f64>() / t;
    let aleatoric = p_draws.iter().map(|p| p * (1.0 - p)).sum::<f64>() / t;
    let ss = p_draws.iter().map(|p| (p - mu_bar).powi(2)).sum::<f64>();
    Ok(ClassificationUncertainty {
        mu_bar,
        sigma_mu: (ss / (t - 1.0)).sqrt(),
        aleatoric,
        epistemic: ss / t,
    })
}

/// Central interval of the decision-boundary location `x2` at each `x1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryBand {
    pub level: f64,
    pub x1: Vec<f64>,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Draws without a boundary (zero x2 coefficient).
    pub skipped: usize,
}

impl BoundaryBand {
    pub fn widths(&self) -> Vec<f64> {
        self.upper
            .iter()
            .zip(&self.lower)
            .map(|(u, l)| u - l)
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x1", "lower", "median", "upper", "width"])?;
        for i in 0..self.x1.len() {
            w.write_record([
                self.x1[i].to_string(),
                self.lower[i].to_string(),
                self.median[i].to_string(),
                self.upper[i].to_string(),
                (self.upper[i] - self.lower[i]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Linear-predictor value at which the link returns 1/2.
fn half_probability_point(link: Link) -> f64 {
    match link {
        Link::Cloglog => std::f64::consts::LN_2.ln(),
        Link::Probit => norm_quantile(0.5),
        _ => 0.0,
    }
}

/// For each `x1` in `grid`, the boundary `x2` solving `l(θ0 + θ1·x1 + θ2·x2) = 1/2`
/// is computed per posterior draw and summarized by its central `level`
/// interval.
pub fn decision_boundary_band(
    draws: &PosteriorDraws,
    model: &ModelSpec,
    grid: &[f64],
    level: f64,
) -> Result<BoundaryBand> {
    if !model.is_classification() || model.mean().feature_count() != 2 {
        return Err(Error::domain(
            "decision boundary needs a two-feature classification model",
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let target = half_probability_point(model.mean_link());
    let usable: Vec<&[f64]> = draws.rows().filter(|th| th[2] != 0.0).collect();
    let skipped = draws.n_draws() - usable.len();
    if 2 * skipped > draws.n_draws() || usable.is_empty() {
        return Err(Error::DegenerateBoundary {
            skipped,
            total: draws.n_draws(),
        });
    }
    let tail = 0.5 * (1.0 - level);
    let mut band = BoundaryBand {
        level,
        x1: grid.to_vec(),
        median: Vec::with_capacity(grid.len()),
        lower: Vec::with_capacity(grid.len()),
        upper: Vec::with_capacity(grid.len()),
        skipped,
    };
    for &x1 in grid {
        let mut x2: Vec<f64> = usable
            .iter()
            .map(|th| (target - th[0] - th[1] * x1) / th[2])
            .collect();
        x2.sort_by(f64::total_cmp);
        band.lower.push(empirical_quantile(&x2, tail));
        band.median.push(empirical_quantile(&x2, 0.5));
        band.upper.push(empirical_quantile(&x2, 1.0 - tail));
    }
    Ok(band)
}
