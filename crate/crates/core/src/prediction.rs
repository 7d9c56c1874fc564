//! Posterior predictive distributions and their summaries: intervals,
//! exceedance probabilities, truncation and model averaging.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{ModelSpec, PosteriorDraws};
use crate::rng::{derive_seed, rng_from_seed};

/// Intervals computed from fewer samples are refused.
pub const MIN_INTERVAL_SAMPLES: usize = 100;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    /// Parameter draws (or point estimates) that fed the samples.
    pub parameter_draws: usize,
    pub per_draw: usize,
    pub truncated: bool,
}

/// Empirical sample of future outcomes at one query input.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    x: f64,
    samples: Vec<f64>,
    /// Index of the contributing model for each sample (all zero unless the
    /// distribution is a mixture).
    sources: Vec<usize>,
    provenance: Provenance,
}

impl PredictiveDistribution {
    pub fn from_samples(x: f64, samples: Vec<f64>, provenance: Provenance) -> Self {
        let sources = vec![0; samples.len()];
        Self {
            x,
            samples,
            sources,
            provenance,
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Sample standard deviation (divisor n − 1).
    pub fn sd(&self) -> f64 {
        let m = self.mean();
        let n = self.samples.len() as f64;
        (self.samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
    }

    pub fn variance(&self) -> f64 {
        self.sd().powi(2)
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut s = self.samples.clone();
        s.sort_by(f64::total_cmp);
        s
    }

    pub fn median(&self) -> f64 {
        empirical_quantile(&self.sorted(), 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

impl PredictionInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Above,
    Below,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "above" => Ok(Direction::Above),
            "below" => Ok(Direction::Below),
            other => Err(Error::domain(format!(
                "direction must be 'above' or 'below', got '{other}'"
            ))),
        }
    }
}

/// Linear-interpolation quantile of sorted data (R type 7).
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn model_id(model: &ModelSpec) -> String {
    format!("{:?}/{:?}", model.mean(), model.likelihood())
}

/// Pushes every posterior draw through the model at `x` and samples
/// `per_draw` outcomes from each resulting `G(μ, σ)` (truncated when the
/// model carries truncation bounds).
pub fn posterior_predictive<R: Rng>(
    model: &ModelSpec,
    draws: &PosteriorDraws,
    x: f64,
    per_draw: usize,
    rng: &mut R,
) -> Result<PredictiveDistribution> {
    if per_draw == 0 {
        return Err(Error::domain("per_draw must be at least 1"));
    }
    if draws.n_draws() == 0 {
        return Err(Error::domain("no posterior draws"));
    }
    let mut samples = Vec::with_capacity(draws.n_draws() * per_draw);
    for theta in draws.rows() {
        let g = model.predictive_distribution(theta, &[x])?;
        for _ in 0..per_draw {
            samples.push(g.sample_one(rng));
        }
    }
    Ok(PredictiveDistribution::from_samples(
        x,
        samples,
        Provenance {
            model_id: model_id(model),
            parameter_draws: draws.n_draws(),
            per_draw,
            truncated: model.truncation().is_some(),
        },
    ))
}

/// `n` outcomes from the model at a single parameter vector.
pub fn plug_in_predictive<R: Rng>(
    model: &ModelSpec,
    theta: &[f64],
    x: f64,
    n: usize,
    rng: &mut R,
) -> Result<PredictiveDistribution> {
    if n == 0 {
        return Err(Error::domain("plug-in prediction needs n >= 1"));
    }
    let g = model.predictive_distribution(theta, &[x])?;
    Ok(PredictiveDistribution::from_samples(
        x,
        g.sample(rng, n),
        Provenance {
            model_id: format!("{} (plug-in)", model_id(model)),
            parameter_draws: 1,
            per_draw: n,
            truncated: model.truncation().is_some(),
        },
    ))
}

/// Posterior predictive at every grid point, in parallel. Grid point `i`
/// uses a generator seeded from `(seed, model_index, i)`.
pub fn predict_grid(
    model: &ModelSpec,
    draws: &PosteriorDraws,
    grid: &[f64],
    per_draw: usize,
    seed: u64,
    model_index: u64,
) -> Result<Vec<PredictiveDistribution>> {
    grid.par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut rng = rng_from_seed(derive_seed(seed, &[model_index, i as u64]));
            posterior_predictive(model, draws, x, per_draw, &mut rng)
        })
        .collect()
}

/// Central (equal-tailed) interval holding `level` of the samples.
pub fn interval(pred: &PredictiveDistribution, level: f64) -> Result<PredictionInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!(
            "interval level must lie in (0, 1), got {level}"
        )));
    }
    if pred.len() < MIN_INTERVAL_SAMPLES {
        return Err(Error::Precision(format!(
            "{} samples cannot support an interval; need at least {MIN_INTERVAL_SAMPLES}",
            pred.len()
        )));
    }
    let sorted = pred.sorted();
    let tail = 0.5 * (1.0 - level);
    Ok(PredictionInterval {
        level,
        lower: empirical_quantile(&sorted, tail),
        upper: empirical_quantile(&sorted, 1.0 - tail),
    })
}

/// Fraction of samples strictly above (or below) `threshold`.
pub fn prob_exceeds(pred: &PredictiveDistribution, threshold: f64, direction: Direction) -> f64 {
    let count = pred
        .samples
        .iter()
        .filter(|&&v| match direction {
            Direction::Above => v > threshold,
            Direction::Below => v < threshold,
        })
        .count();
    count as f64 / pred.len() as f64
}

/// Evenly strided selection of `k` of `n` indices.
fn strided(n: usize, k: usize) -> impl Iterator<Item = usize> {
    (0..k).map(move |i| i * n / k)
}

/// Mixture of predictive distributions at a common query.
///
/// Without weights every component is thinned to the size of the smallest
/// and all are pooled. With weights, component `i` contributes
/// `round(wᵢ·T)` samples for the largest total `T` the components can
/// supply. Each pooled sample keeps the index of its source component.
pub fn average_predictions(
    preds: &[PredictiveDistribution],
    weights: Option<&[f64]>,
) -> Result<PredictiveDistribution> {
    let first = preds
        .first()
        .ok_or_else(|| Error::domain("nothing to average"))?;
    if let Some(p) = preds.iter().find(|p| p.x != first.x) {
        return Err(Error::domain(format!(
            "cannot average predictions at different inputs ({} vs {})",
            first.x, p.x
        )));
    }
    if preds.iter().any(|p| p.is_empty()) {
        return Err(Error::domain(
            "cannot average an empty predictive distribution",
        ));
    }
    let counts: Vec<usize> = match weights {
        None => {
            let common = preds.iter().map(|p| p.len()).min().unwrap_or(0);
            vec![common; preds.len()]
        }
        Some(w) => {
            if w.len() != preds.len() {
                return Err(Error::domain(
                    "one weight per predictive distribution required",
                ));
            }
            if w.iter().any(|&v| !(v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::domain("weights must be nonnegative and sum to 1"));
            }
            let total = preds
                .iter()
                .zip(w)
                .filter(|(_, &wi)| wi > 0.0)
                .map(|(p, &wi)| (p.len() as f64 / wi).floor())
                .fold(f64::INFINITY, f64::min);
            preds
                .iter()
                .zip(w)
                .map(|(p, &wi)| ((wi * total).round() as usize).min(p.len()))
                .collect()
        }
    };

    let mut samples = Vec::with_capacity(counts.iter().sum());
    let mut sources = Vec::with_capacity(samples.capacity());
    for (i, (p, &k)) in preds.iter().zip(&counts).enumerate() {
        for idx in strided(p.len(), k) {
            samples.push(p.samples[idx]);
            sources.push(i);
        }
    }
    let ids: Vec<&str> = preds
        .iter()
        .map(|p| p.provenance.model_id.as_str())
        .collect();
    Ok(PredictiveDistribution {
        x: first.x,
        samples,
        sources,
        provenance: Provenance {
            model_id: format!("average[{}]", ids.join(", ")),
            parameter_draws: preds.iter().map(|p| p.provenance.parameter_draws).sum(),
            per_draw: first.provenance.per_draw,
            truncated: preds.iter().all(|p| p.provenance.truncated),
        },
    })
}

/// Interval widths over a grid for each model and for their average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthTable {
    pub level: f64,
    pub x: Vec<f64>,
    /// `widths[m][i]`: model `m` at grid point `i`.
    pub widths: Vec<Vec<f64>>,
    pub averaged: Vec<f64>,
}

impl WidthTable {
    pub fn write_csv<W: std::io::Write>(&self, names: &[String], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["x".to_string()];
        header.extend(names.iter().cloned());
        header.push("averaged".into());
        w.write_record(&header)?;
        for i in 0..self.x.len() {
            let mut rec = vec![self.x[i].to_string()];
            rec.extend(self.widths.iter().map(|m| m[i].to_string()));
            rec.push(self.averaged[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `models_preds[m][i]` is model `m`'s predictive distribution at grid
/// point `i`; every model must cover the same grid.
pub fn pi_width_curve(
    models_preds: &[Vec<PredictiveDistribution>],
    level: f64,
) -> Result<WidthTable> {
    let first = models_preds
        .first()
        .ok_or_else(|| Error::domain("no models"))?;
    let grid: Vec<f64> = first.iter().map(|p| p.x).collect();
    for m in models_preds {
        if m.len() != grid.len() || m.iter().zip(&grid).any(|(p, &x)| p.x != x) {
            return Err(Error::domain("models were predicted on different grids"));
        }
    }
    let widths = models_preds
        .iter()
        .map(|m| {
            m.iter()
                .map(|p| interval(p, level).map(|pi| pi.width()))
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let averaged = (0..grid.len())
        .map(|i| {
            let at: Vec<PredictiveDistribution> =
                models_preds.iter().map(|m| m[i].clone()).collect();
            interval(&average_predictions(&at, None)?, level).map(|pi| pi.width())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(WidthTable {
        level,
        x: grid,
        widths,
        averaged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub threshold: f64,
    pub direction: Direction,
    pub value: f64,
}

/// Machine-readable summary of one predictive distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub x: f64,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub pi_lower: f64,
    pub pi_upper: f64,
    pub level: f64,
    pub p_exceeds: Option<Exceedance>,
}

pub fn summarize(
    pred: &PredictiveDistribution,
    level: f64,
    threshold: Option<(f64, Direction)>,
) -> Result<PredictiveSummary> {
    let pi = interval(pred, level)?;
    Ok(PredictiveSummary {
        x: pred.x,
        mean: pred.mean(),
        median: pred.median(),
        sd: pred.sd(),
        pi_lower: pi.lower,
        pi_upper: pi.upper,
        level,
        p_exceeds: threshold.map(|(t, d)| Exceedance {
            threshold: t,
            direction: d,
            value: prob_exceeds(pred, t, d),
        }),
    })
}

/// Writes `x, sample` rows for each distribution.
pub fn write_samples_csv<W: std::io::Write>(
    preds: &[PredictiveDistribution],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "sample"])?;
    for p in preds {
        let x = p.x.to_string();
        for s in &p.samples {
            w.write_record([x.as_str(), s.to_string().as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use crate::rng::rng_from_seed;

    fn dist(x: f64, samples: Vec<f64>) -> PredictiveDistribution {
        PredictiveDistribution::from_samples(
            x,
            samples,
            Provenance {
                model_id: "test".into(),
                parameter_draws: 1,
                per_draw: 1,
                truncated: false,
            },
        )
    }

    fn normal_samples(mu: f64, sd: f64, n: usize, seed: u64) -> Vec<f64> {
        DistributionSpec::normal(mu, sd)
            .unwrap()
            .sample(&mut rng_from_seed(seed), n)
    }

    #[test]
    fn interval_of_point_mass() {
        let pi = interval(&dist(0.0, vec![2.5; 200]), 0.95).unwrap();
        assert_eq!((pi.lower, pi.upper), (2.5, 2.5));
    }

    #[test]
    fn interval_of_standard_normal() {
        let pi = interval(&dist(0.0, normal_samples(0.0, 1.0, 100_000, 1)), 0.95).unwrap();
        assert!(
            (pi.lower + 1.96).abs() < 0.03 && (pi.upper - 1.96).abs() < 0.03,
            "{pi:?}"
        );
    }

    #[test]
    fn interval_of_uniform() {
        let mut rng = rng_from_seed(2);
        let s: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let pi = interval(&dist(0.0, s), 0.5).unwrap();
        assert!((pi.lower - 0.25).abs() < 0.01 && (pi.upper - 0.75).abs() < 0.01);
    }

    #[test]
    fn interval_errors() {
        assert!(matches!(
            interval(&dist(0.0, vec![1.0; 99]), 0.9),
            Err(Error::Precision(_))
        ));
        assert!(matches!(
            interval(&dist(0.0, vec![1.0; 500]), 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn quantile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_quantile(&s, 0.5), 2.5);
        assert_eq!(empirical_quantile(&s, 0.0), 1.0);
        assert_eq!(empirical_quantile(&s, 1.0), 4.0);
    }

    #[test]
    fn exceedance() {
        let d = dist(0.0, normal_samples(1.0, 0.1, 100_000, 3));
        let p = prob_exceeds(&d, 1.2, Direction::Above);
        assert!((p - 0.0228).abs() < 0.005, "{p}");
        assert_eq!(prob_exceeds(&d, -10.0, Direction::Above), 1.0);
        let tied = dist(0.0, vec![0.0, 1.0, 1.0, 2.0]);
        let total = prob_exceeds(&tied, 1.0, Direction::Above)
            + prob_exceeds(&tied, 1.0, Direction::Below)
            + 0.5;
        assert_eq!(total, 1.0);
    }

    #[test]
    fn averaging_with_self_is_idempotent() {
        let a = dist(0.3, normal_samples(0.0, 1.0, 20_000, 4));
        let avg = average_predictions(&[a.clone(), a.clone()], None).unwrap();
        assert!(ks_statistic(avg.samples(), a.samples()) < 0.02);
        assert_eq!(avg.len(), 40_000);
        assert_eq!(avg.sources().iter().filter(|&&s| s == 1).count(), 20_000);
    }

    #[test]
    fn mixture_interval_is_wider_than_components() {
        let a = dist(0.0, normal_samples(0.0, 1.0, 50_000, 5));
        let b = dist(0.0, normal_samples(4.0, 1.0, 50_000, 6));
        let avg = average_predictions(&[a, b], None).unwrap();
        let pi = interval(&avg, 0.95).unwrap();
        assert!(pi.width() > 3.92 + 0.5, "{pi:?}");
        assert!(pi.lower < -1.5 && pi.upper > 5.5);
    }

    #[test]
    fn weighted_average_counts() {
        let a = dist(0.0, vec![0.0; 1000]);
        let b = dist(0.0, vec![1.0; 400]);
        let avg = average_predictions(&[a, b], Some(&[0.75, 0.25])).unwrap();
        // T = min(1000 / 0.75, 400 / 0.25) = 1333
        assert_eq!(avg.len(), 1000 + 333);
        assert!((avg.mean() - 333.0 / 1333.0).abs() < 1e-12);
        assert!(average_predictions(&[dist(0.0, vec![1.0]), dist(1.0, vec![1.0])], None).is_err());
        assert!(average_predictions(&[dist(0.0, vec![1.0])], Some(&[0.5])).is_err());
    }

    #[test]
    fn width_curves() {
        let grid = [0.0, 1.0];
        let model = |seed| {
            grid.iter()
                .enumerate()
                .map(|(i, &x)| dist(x, normal_samples(0.0, 1.0, 2000, seed + i as u64)))
                .collect::<Vec<_>>()
        };
        let m = model(10);
        let t = pi_width_curve(&[m.clone(), m.clone()], 0.95).unwrap();
        assert_eq!(t.widths[0], t.widths[1]);
        assert!(t
            .widths
            .iter()
            .flatten()
            .chain(&t.averaged)
            .all(|&w| w >= 0.0));
        let mut shifted = model(20);
        shifted[1].x = 2.0;
        assert!(pi_width_curve(&[m, shifted], 0.95).is_err());
    }

    #[test]
    fn ks_of_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_statistic(&a, &a), 0.0);
        assert_eq!(ks_statistic(&a, &[10.0, 11.0]), 1.0);
    }
}
