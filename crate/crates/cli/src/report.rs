//! End-to-end demonstration pipeline.
//!
//! Every stage draws its randomness from seeds derived from the master seed
//! and a fixed stage index, so the whole directory is a pure function of
//! the seed regardless of thread count.

use std::path::Path;

use serde::Serialize;

use ppm_core::inference::{fit_ensemble, plug_in_fit_with, Diagnostics, PlugInConfig};
use ppm_core::prediction::{
    average_predictions, interval, pi_width_curve, plug_in_predictive, posterior_predictive,
    predict_grid, prob_exceeds, summarize, write_samples_csv, Direction, PredictiveDistribution,
    PredictiveSummary, WidthTable,
};
use ppm_core::simulate::{simulate_classification, simulate_dataset, subsample_every_kth};
use ppm_core::special::brent_root;
use ppm_core::uncertainty::{
    classify_predictive, decision_boundary_band, decompose_uncertainty, generate_datasets,
    pool_ensemble_predictions, propagate_test_error, BoundaryBand, ClassificationUncertainty,
    MeasuredValue,
};
use ppm_core::{
    derive_seed, fit, rng_from_seed, Dataset, DistributionSpec, FitConfig, Link, MeanForm,
    ModelSpec, PosteriorDraws, VarianceFunction,
};
use rand::Rng;

use crate::args::ReportArgs;
use crate::output::{ensure_dir, write_csv_with, write_json, RunConfig};
use crate::CliError;

pub const LEVEL: f64 = 0.95;
pub const THETA1: f64 = 3.25;
pub const THETA2: f64 = 0.2;
pub const SIGMA: f64 = 0.1;
pub const N: usize = 100;
pub const SUBSAMPLE_K: usize = 8;
/// Query and threshold for the tail-probability comparison.
pub const TAIL_X: f64 = 0.5;
pub const TAIL_THRESHOLD: f64 = 1.2;
/// Test compound of the measurement-error stage.
pub const TEST_X: f64 = 0.15;
pub const TEST_X_SE: f64 = 0.06;
pub const TEST_X_DRAWS: usize = 1000;
pub const GENERATED_DATASETS: usize = 5;
/// Low-x query of the truncation stage.
pub const TRUNCATION_X: f64 = 0.05;
pub const CLASSIFICATION_N: usize = 200;
pub const CLASSIFICATION_COEFFICIENTS: [f64; 3] = [0.0, 1.5, -1.5];
/// Predicted probability shared by the matched classification pair.
pub const PAIR_PROBABILITY: f64 = 0.75;
pub const CALIBRATION_POINTS: usize = 2000;
pub const ENSEMBLE_SIZE: u64 = 4;

/// Stage indices for seed derivation.
mod stage {
    pub const RUNNING: u64 = 1;
    pub const MEAN_FUNCTION: u64 = 2;
    pub const PARAMETER: u64 = 3;
    pub const MEASUREMENT: u64 = 4;
    pub const TRUNCATION: u64 = 5;
    pub const VARIANCE: u64 = 7;
    pub const CLASSIFICATION: u64 = 8;
    pub const ENSEMBLE: u64 = 9;
    pub const CALIBRATION: u64 = 10;
}

/// Longer than the library default so that the curved posteriors of the
/// exponential models mix well.
pub fn report_fit_config(seed: u64) -> FitConfig {
    FitConfig {
        warmup: 4000,
        samples: 2500,
        seed,
        ..FitConfig::default()
    }
}

fn grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub parameters: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub max_r_hat: f64,
    pub min_ess: f64,
    pub diagnostics: Option<Diagnostics>,
}

impl FitSummary {
    fn of(draws: &PosteriorDraws) -> Self {
        let diag = draws.diagnostics().cloned();
        Self {
            parameters: draws.names().to_vec(),
            mean: draws.means(),
            sd: draws.sds(),
            max_r_hat: diag.as_ref().map_or(f64::NAN, Diagnostics::max_r_hat),
            min_ess: diag.as_ref().map_or(f64::NAN, Diagnostics::min_ess),
            diagnostics: diag,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunningExample {
    pub truth: [f64; 3],
    pub fit: FitSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanFunctionStage {
    pub models: Vec<String>,
    pub fits: Vec<FitSummary>,
    pub widths: WidthTable,
    /// Smallest grid x from which the averaged interval is the widest at
    /// every larger grid x.
    pub averaged_widest_from: Option<f64>,
    /// Averaged width minus the widest individual width at the lowest x.
    pub low_x_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParameterStage {
    pub n: usize,
    pub plug_in: Vec<f64>,
    pub fit: FitSummary,
    pub x: Vec<f64>,
    pub bayes_width: Vec<f64>,
    pub plug_in_width: Vec<f64>,
    pub width_ratio: Vec<f64>,
    pub median_width_ratio: f64,
    pub tail_bayes: f64,
    pub tail_plug_in: f64,
    pub tail_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasurementStage {
    pub baseline: PredictiveSummary,
    pub test_error: PredictiveSummary,
    pub generated: Vec<PredictiveSummary>,
    pub pooled: PredictiveSummary,
    pub baseline_variance: f64,
    pub test_error_variance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationStage {
    pub x: f64,
    pub fit: FitSummary,
    pub untruncated: PredictiveSummary,
    pub truncated: PredictiveSummary,
    pub negative_fraction_untruncated: f64,
    pub negative_fraction_truncated: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceStage {
    pub constant: FitSummary,
    pub linear_in_mu: FitSummary,
    /// Fraction of training points inside each model's interval, for the
    /// lower and upper halves of x.
    pub coverage_constant: [f64; 2],
    pub coverage_linear_in_mu: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct PairMember {
    pub x: Vec<f64>,
    pub y_predictive: f64,
    #[serde(flatten)]
    pub uncertainty: ClassificationUncertainty,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationStage {
    pub fit: FitSummary,
    pub pair: [PairMember; 2],
    pub epistemic_ratio: f64,
    pub aleatoric_ratio: f64,
    pub band_center_x1: f64,
    pub band_center_width: f64,
    pub band_left_width: f64,
    pub band_right_width: f64,
    /// Largest |aleatoric + epistemic − p̄(1 − p̄)| over all decomposed points.
    pub max_identity_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleStage {
    pub seeds: Vec<u64>,
    pub member_means: Vec<f64>,
    pub pooled: PredictiveSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationStage {
    pub points: usize,
    pub covered: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub seed: u64,
    pub running_example: RunningExample,
    pub mean_function: MeanFunctionStage,
    pub parameter_uncertainty: ParameterStage,
    pub measurement_error: MeasurementStage,
    pub truncation: TruncationStage,
    pub variance_function: VarianceStage,
    pub classification: ClassificationStage,
    pub seed_ensemble: EnsembleStage,
    pub calibration: CalibrationStage,
}

struct Ctx<'a> {
    dir: &'a Path,
    run: &'a RunConfig,
    seed: u64,
}

impl Ctx<'_> {
    fn seed(&self, path: &[u64]) -> u64 {
        derive_seed(self.seed, path)
    }

    fn csv<F>(&self, name: &str, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> ppm_core::Result<()>,
    {
        write_csv_with(&self.dir.join(name), fill)
    }

    fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<(), CliError> {
        write_json(&self.dir.join(name), self.run, body)
    }
}

pub fn run(args: &ReportArgs) -> Result<ReportSummary, CliError> {
    ensure_dir(&args.out_dir)?;
    let run = RunConfig::new("report", args, args.seed);
    let ctx = Ctx {
        dir: &args.out_dir,
        run: &run,
        seed: args.seed,
    };

    let data = simulate_dataset(N, THETA1, THETA2, SIGMA, args.seed)?;
    ctx.csv("data.csv", |b| data.write_csv(b))?;

    let (running_example, true_draws) = running_example(&ctx, &data)?;
    let mean_function = mean_function(&ctx, &data)?;
    let parameter_uncertainty = parameter_uncertainty(&ctx, &data)?;
    let measurement_error = measurement_error(&ctx, &data)?;
    let truncation = truncation(&ctx, &data)?;
    links(&ctx)?;
    let variance_function = variance_function(&ctx)?;
    let classification = classification(&ctx)?;
    let seed_ensemble = seed_ensemble(&ctx, &data)?;
    let calibration = calibration(&ctx, &true_draws)?;

    let summary = ReportSummary {
        seed: args.seed,
        running_example,
        mean_function,
        parameter_uncertainty,
        measurement_error,
        truncation,
        variance_function,
        classification,
        seed_ensemble,
        calibration,
    };
    ctx.json("report.json", &summary)?;
    Ok(summary)
}

fn running_example(
    ctx: &Ctx,
    data: &Dataset,
) -> Result<(RunningExample, PosteriorDraws), CliError> {
    let curve = grid(0.0, 1.0, 0.01);
    let mu: Vec<f64> = curve
        .iter()
        .map(|&x| MeanForm::TrueModel.eval_scalar(&[THETA1, THETA2], x))
        .collect::<Result<_, _>>()?;
    let true_curve = Dataset::new(curve, mu)?;
    ctx.csv("true_curve.csv", |b| true_curve.write_csv(b))?;

    let model = ModelSpec::regression(MeanForm::TrueModel);
    let draws = fit(
        &model,
        data,
        &report_fit_config(ctx.seed(&[stage::RUNNING])),
    )?;
    ctx.csv("running_example_draws.csv", |b| draws.write_csv(b))?;
    let out = RunningExample {
        truth: [THETA1, THETA2, SIGMA],
        fit: FitSummary::of(&draws),
    };
    ctx.json("running_example.json", &out)?;
    Ok((out, draws))
}

fn interval_rows(
    preds: &[PredictiveDistribution],
    label: &str,
) -> Result<Vec<[String; 5]>, CliError> {
    preds
        .iter()
        .map(|p| {
            let pi = interval(p, LEVEL)?;
            Ok([
                label.to_string(),
                p.x().to_string(),
                p.mean().to_string(),
                pi.lower.to_string(),
                pi.upper.to_string(),
            ])
        })
        .collect()
}

fn write_rows(buf: &mut Vec<u8>, header: &[&str], rows: &[Vec<String>]) -> ppm_core::Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn mean_function(ctx: &Ctx, data: &Dataset) -> Result<MeanFunctionStage, CliError> {
    let forms = [MeanForm::Quadratic, MeanForm::Exp2, MeanForm::Exp3];
    let names: Vec<String> = forms.iter().map(|f| format!("{f:?}")).collect();
    let xs = grid(0.0, 2.0, 0.05);
    let mut fits = Vec::new();
    let mut preds = Vec::new();
    let mut rows = Vec::new();
    for (m, form) in forms.iter().enumerate() {
        let model = ModelSpec::regression(*form);
        let draws = fit(
            &model,
            data,
            &report_fit_config(ctx.seed(&[stage::MEAN_FUNCTION, m as u64])),
        )?;
        let p = predict_grid(
            &model,
            &draws,
            &xs,
            1,
            ctx.seed(&[stage::MEAN_FUNCTION]),
            m as u64,
        )?;
        rows.extend(interval_rows(&p, &names[m])?.into_iter().map(Vec::from));
        fits.push(FitSummary::of(&draws));
        preds.push(p);
    }
    let averaged: Vec<PredictiveDistribution> = (0..xs.len())
        .map(|i| {
            average_predictions(
                &preds.iter().map(|m| m[i].clone()).collect::<Vec<_>>(),
                None,
            )
        })
        .collect::<Result<_, _>>()?;
    rows.extend(
        interval_rows(&averaged, "averaged")?
            .into_iter()
            .map(Vec::from),
    );
    ctx.csv("mean_function_intervals.csv", |b| {
        write_rows(b, &["model", "x", "mean", "lower", "upper"], &rows)
    })?;

    let widths = pi_width_curve(&preds, LEVEL)?;
    ctx.csv("mean_function_widths.csv", |b| widths.write_csv(&names, b))?;
    let is_widest = |i: usize| widths.widths.iter().all(|m| widths.averaged[i] > m[i]);
    let mut from = None;
    for i in (0..xs.len()).rev() {
        if !is_widest(i) {
            break;
        }
        from = Some(xs[i]);
    }
    let low_max = widths
        .widths
        .iter()
        .map(|m| m[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let out = MeanFunctionStage {
        models: names,
        fits,
        low_x_margin: widths.averaged[0] - low_max,
        averaged_widest_from: from,
        widths,
    };
    ctx.json("mean_function.json", &out)?;
    Ok(out)
}

fn parameter_uncertainty(ctx: &Ctx, data: &Dataset) -> Result<ParameterStage, CliError> {
    let sub = subsample_every_kth(data, SUBSAMPLE_K)?;
    ctx.csv("subsample.csv", |b| sub.write_csv(b))?;
    let model = ModelSpec::regression(MeanForm::Quadratic);
    let draws = fit(
        &model,
        &sub,
        &report_fit_config(ctx.seed(&[stage::PARAMETER, 0])),
    )?;
    let theta = plug_in_fit_with(
        &model,
        &sub,
        &PlugInConfig {
            seed: ctx.seed(&[stage::PARAMETER, 1]),
            ..Default::default()
        },
    )?;

    let xs = grid(0.0, 1.0, 0.05);
    let samples = draws.n_draws();
    let mut rows = Vec::new();
    let (mut bw, mut pw) = (Vec::new(), Vec::new());
    for (i, &x) in xs.iter().enumerate() {
        let mut rng = rng_from_seed(ctx.seed(&[stage::PARAMETER, 2, i as u64]));
        let b = interval(
            &posterior_predictive(&model, &draws, x, 1, &mut rng)?,
            LEVEL,
        )?;
        let p = interval(
            &plug_in_predictive(&model, &theta, x, samples, &mut rng)?,
            LEVEL,
        )?;
        rows.push(
            [x, b.lower, b.upper, p.lower, p.upper, b.width() / p.width()]
                .iter()
                .map(f64::to_string)
                .collect(),
        );
        bw.push(b.width());
        pw.push(p.width());
    }
    ctx.csv("parameter_uncertainty_intervals.csv", |b| {
        write_rows(
            b,
            &[
                "x",
                "bayes_lower",
                "bayes_upper",
                "plug_in_lower",
                "plug_in_upper",
                "width_ratio",
            ],
            &rows,
        )
    })?;
    let ratio: Vec<f64> = bw.iter().zip(&pw).map(|(b, p)| b / p).collect();
    let mut sorted = ratio.clone();
    sorted.sort_by(f64::total_cmp);
    let median = ppm_core::prediction::empirical_quantile(&sorted, 0.5);

    let mut rng = rng_from_seed(ctx.seed(&[stage::PARAMETER, 3]));
    let bayes = posterior_predictive(&model, &draws, TAIL_X, 40, &mut rng)?;
    let plug = plug_in_predictive(&model, &theta, TAIL_X, bayes.len(), &mut rng)?;
    let tail_bayes = prob_exceeds(&bayes, TAIL_THRESHOLD, Direction::Above);
    let tail_plug_in = prob_exceeds(&plug, TAIL_THRESHOLD, Direction::Above);
    let out = ParameterStage {
        n: sub.len(),
        plug_in: theta,
        fit: FitSummary::of(&draws),
        x: xs,
        bayes_width: bw,
        plug_in_width: pw,
        width_ratio: ratio,
        median_width_ratio: median,
        tail_bayes,
        tail_plug_in,
        tail_ratio: tail_bayes / tail_plug_in,
    };
    ctx.json("parameter_uncertainty.json", &out)?;
    Ok(out)
}

/// Per-row x errors between 0.02 and 0.06 and a constant y error of 0.05.
fn with_measurement_errors(data: &Dataset, seed: u64) -> Result<Dataset, CliError> {
    let mut rng = rng_from_seed(seed);
    let x_se: Vec<f64> = (0..data.len())
        .map(|_| 0.02 + 0.04 * rng.random::<f64>())
        .collect();
    let y_se = vec![0.05; data.len()];
    Ok(data.clone().with_errors(Some(x_se), Some(y_se))?)
}

fn measurement_error(ctx: &Ctx, data: &Dataset) -> Result<MeasurementStage, CliError> {
    let noisy = with_measurement_errors(data, ctx.seed(&[stage::MEASUREMENT, 0]))?;
    ctx.csv("measurement_error_data.csv", |b| noisy.write_csv(b))?;
    let model = ModelSpec::regression(MeanForm::Exp3);
    let baseline_draws = fit(
        &model,
        data,
        &report_fit_config(ctx.seed(&[stage::MEASUREMENT, 1])),
    )?;

    let mut rng = rng_from_seed(ctx.seed(&[stage::MEASUREMENT, 2]));
    let baseline = posterior_predictive(&model, &baseline_draws, TEST_X, 1, &mut rng)?;
    let test_error = propagate_test_error(
        &model,
        &baseline_draws,
        MeasuredValue::new(TEST_X, TEST_X_SE)?,
        TEST_X_DRAWS,
        &mut rng,
    )?;

    let mut gen_rng = rng_from_seed(ctx.seed(&[stage::MEASUREMENT, 3]));
    let generated = generate_datasets(&noisy, GENERATED_DATASETS, &mut gen_rng)?;
    let fits = generated
        .iter()
        .enumerate()
        .map(|(k, d)| {
            fit(
                &model,
                d,
                &report_fit_config(ctx.seed(&[stage::MEASUREMENT, 4, k as u64])),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut pool_rng = rng_from_seed(ctx.seed(&[stage::MEASUREMENT, 5]));
    let per_fit = fits
        .iter()
        .map(|d| posterior_predictive(&model, d, TEST_X, 1, &mut pool_rng))
        .collect::<Result<Vec<_>, _>>()?;
    let pooled = pool_ensemble_predictions(&fits, &model, TEST_X, &mut pool_rng)?;

    let mut all = vec![baseline.clone(), test_error.clone(), pooled.clone()];
    all.extend(per_fit.iter().cloned());
    ctx.csv("measurement_error_samples.csv", |b| {
        let labels: Vec<String> = ["baseline", "test_error", "pooled"]
            .iter()
            .map(|s| s.to_string())
            .chain((0..per_fit.len()).map(|k| format!("generated_{k}")))
            .collect();
        let mut rows = Vec::new();
        for (label, p) in labels.iter().zip(&all) {
            for s in p.samples() {
                rows.push(vec![label.clone(), s.to_string()]);
            }
        }
        write_rows(b, &["source", "sample"], &rows)
    })?;
    let out = MeasurementStage {
        baseline: summarize(&baseline, LEVEL, None)?,
        test_error: summarize(&test_error, LEVEL, None)?,
        generated: per_fit
            .iter()
            .map(|p| summarize(p, LEVEL, None))
            .collect::<Result<_, _>>()?,
        pooled: summarize(&pooled, LEVEL, None)?,
        baseline_variance: baseline.variance(),
        test_error_variance: test_error.variance(),
    };
    ctx.json("measurement_error.json", &out)?;
    Ok(out)
}

fn truncation(ctx: &Ctx, data: &Dataset) -> Result<TruncationStage, CliError> {
    let model = ModelSpec::regression(MeanForm::Exp2);
    let truncated_model = model.clone().with_truncation(Some(0.0), None)?;
    let draws = fit(
        &model,
        data,
        &report_fit_config(ctx.seed(&[stage::TRUNCATION, 0])),
    )?;
    let xs = grid(0.0, 1.0, 0.05);
    let plain = predict_grid(&model, &draws, &xs, 1, ctx.seed(&[stage::TRUNCATION, 1]), 0)?;
    let cut = predict_grid(
        &truncated_model,
        &draws,
        &xs,
        1,
        ctx.seed(&[stage::TRUNCATION, 1]),
        1,
    )?;
    let mut rows: Vec<Vec<String>> = interval_rows(&plain, "untruncated")?
        .into_iter()
        .map(Vec::from)
        .collect();
    rows.extend(interval_rows(&cut, "truncated")?.into_iter().map(Vec::from));
    ctx.csv("truncation_intervals.csv", |b| {
        write_rows(b, &["model", "x", "mean", "lower", "upper"], &rows)
    })?;

    let mut rng = rng_from_seed(ctx.seed(&[stage::TRUNCATION, 2]));
    let at = posterior_predictive(&model, &draws, TRUNCATION_X, 4, &mut rng)?;
    let at_cut = posterior_predictive(&truncated_model, &draws, TRUNCATION_X, 4, &mut rng)?;
    ctx.csv("truncation_samples.csv", |b| {
        write_samples_csv(&[at.clone(), at_cut.clone()], b)
    })?;
    let below = Some((0.0, Direction::Below));
    let out = TruncationStage {
        x: TRUNCATION_X,
        fit: FitSummary::of(&draws),
        negative_fraction_untruncated: prob_exceeds(&at, 0.0, Direction::Below),
        negative_fraction_truncated: prob_exceeds(&at_cut, 0.0, Direction::Below),
        untruncated: summarize(&at, LEVEL, below)?,
        truncated: summarize(&at_cut, LEVEL, below)?,
    };
    ctx.json("truncation.json", &out)?;
    Ok(out)
}

fn links(ctx: &Ctx) -> Result<(), CliError> {
    let links = [Link::Logit, Link::Probit, Link::Cauchit, Link::Cloglog];
    let rows: Vec<Vec<String>> = grid(-5.0, 5.0, 0.1)
        .into_iter()
        .map(|u| {
            std::iter::once(u)
                .chain(links.iter().map(|l| l.apply(u)))
                .map(|v| v.to_string())
                .collect()
        })
        .collect();
    ctx.csv("links.csv", |b| {
        write_rows(b, &["u", "logit", "probit", "cauchit", "cloglog"], &rows)
    })
}

/// Spread growing with the mean: σ = softplus(−3.5 + 2μ).
fn heteroscedastic_data(seed: u64) -> Result<Dataset, CliError> {
    let mut rng = rng_from_seed(seed);
    let xs = grid(0.0, 1.0, 1.0 / (N - 1) as f64);
    let sd = VarianceFunction::linear_in_mu();
    let mut y = Vec::with_capacity(xs.len());
    for &x in &xs {
        let mu = MeanForm::TrueModel.eval_scalar(&[THETA1, THETA2], x)?;
        let s = sd.eval(&[-3.5, 2.0], mu)?;
        y.push(DistributionSpec::normal(mu, s)?.sample_one(&mut rng));
    }
    Ok(Dataset::new(xs, y)?)
}

fn training_coverage(
    model: &ModelSpec,
    draws: &PosteriorDraws,
    data: &Dataset,
    seed: u64,
) -> Result<[f64; 2], CliError> {
    let preds = predict_grid(model, draws, data.x(), 1, seed, 0)?;
    let half = data.len() / 2;
    let mut hit = [0usize; 2];
    for (i, p) in preds.iter().enumerate() {
        if interval(p, LEVEL)?.contains(data.y()[i]) {
            hit[usize::from(i >= half)] += 1;
        }
    }
    Ok([
        hit[0] as f64 / half as f64,
        hit[1] as f64 / (data.len() - half) as f64,
    ])
}

fn variance_function(ctx: &Ctx) -> Result<VarianceStage, CliError> {
    let data = heteroscedastic_data(ctx.seed(&[stage::VARIANCE, 0]))?;
    ctx.csv("variance_function_data.csv", |b| data.write_csv(b))?;
    let constant = ModelSpec::regression(MeanForm::TrueModel);
    let linear = constant
        .clone()
        .with_variance(VarianceFunction::linear_in_mu())?;
    let d_const = fit(
        &constant,
        &data,
        &report_fit_config(ctx.seed(&[stage::VARIANCE, 1])),
    )?;
    let d_lin = fit(
        &linear,
        &data,
        &report_fit_config(ctx.seed(&[stage::VARIANCE, 2])),
    )?;
    let xs = grid(0.0, 1.0, 0.05);
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (label, model, draws, k) in [
        ("constant", &constant, &d_const, 3u64),
        ("linear_in_mu", &linear, &d_lin, 4),
    ] {
        let p = predict_grid(model, draws, &xs, 1, ctx.seed(&[stage::VARIANCE, k]), 0)?;
        rows.extend(interval_rows(&p, label)?.into_iter().map(Vec::from));
    }
    ctx.csv("variance_function_intervals.csv", |b| {
        write_rows(b, &["model", "x", "mean", "lower", "upper"], &rows)
    })?;
    let out = VarianceStage {
        coverage_constant: training_coverage(
            &constant,
            &d_const,
            &data,
            ctx.seed(&[stage::VARIANCE, 5]),
        )?,
        coverage_linear_in_mu: training_coverage(
            &linear,
            &d_lin,
            &data,
            ctx.seed(&[stage::VARIANCE, 6]),
        )?,
        constant: FitSummary::of(&d_const),
        linear_in_mu: FitSummary::of(&d_lin),
    };
    ctx.json("variance_function.json", &out)?;
    Ok(out)
}

fn member(model: &ModelSpec, draws: &PosteriorDraws, x: Vec<f64>) -> Result<PairMember, CliError> {
    let c = classify_predictive(model, draws, &x)?;
    Ok(PairMember {
        y_predictive: c.y_predictive,
        uncertainty: decompose_uncertainty(&c.p_draws)?,
        x,
    })
}

fn identity_error(u: &ClassificationUncertainty) -> f64 {
    (u.aleatoric + u.epistemic - u.mu_bar * (1.0 - u.mu_bar)).abs()
}

/// Two query points with the same mean predicted probability, the second
/// with twice the spread of the first.
///
/// Points move along the posterior-mean decision boundary direction from
/// the feature centroid; at each position the offset across the boundary
/// is solved so that the mean probability equals `target`.
fn matched_pair(
    model: &ModelSpec,
    draws: &PosteriorDraws,
    data: &Dataset,
    target: f64,
) -> Result<[Vec<f64>; 2], CliError> {
    let n = data.len() as f64;
    let c = [
        data.rows().map(|(x, _)| x[0]).sum::<f64>() / n,
        data.rows().map(|(x, _)| x[1]).sum::<f64>() / n,
    ];
    let b = draws.means();
    let norm = (b[1] * b[1] + b[2] * b[2]).sqrt();
    let across = [b[1] / norm, b[2] / norm];
    let along = [-across[1], across[0]];
    let at = |s: f64, t: f64| {
        vec![
            c[0] + s * along[0] + t * across[0],
            c[1] + s * along[1] + t * across[1],
        ]
    };
    let mean_p = |x: &[f64]| {
        classify_predictive(model, draws, x)
            .map(|r| r.y_predictive)
            .unwrap_or(f64::NAN)
    };
    let offset = |s: f64| brent_root(|t| mean_p(&at(s, t)) - target, -20.0, 20.0, 1e-15);
    let spread = |s: f64| -> f64 {
        offset(s)
            .and_then(|t| classify_predictive(model, draws, &at(s, t)).ok())
            .and_then(|r| decompose_uncertainty(&r.p_draws).ok())
            .map_or(f64::NAN, |u| u.sigma_mu)
    };
    let t0 = offset(0.0)
        .ok_or_else(|| CliError::Runtime("no point with the target probability".into()))?;
    let base = spread(0.0);
    let s_star = [1.0, -1.0]
        .iter()
        .filter_map(|&dir| {
            let g = |s: f64| spread(dir * s) - 2.0 * base;
            (g(8.0) > 0.0)
                .then(|| brent_root(g, 0.0, 8.0, 1e-10))
                .flatten()
                .map(|s| dir * s)
        })
        .min_by(|a: &f64, b: &f64| a.abs().total_cmp(&b.abs()))
        .ok_or_else(|| {
            CliError::Runtime("no point with twice the spread along the boundary".into())
        })?;
    let t_star = offset(s_star).ok_or_else(|| CliError::Runtime("offset search failed".into()))?;
    Ok([at(0.0, t0), at(s_star, t_star)])
}

fn classification(ctx: &Ctx) -> Result<ClassificationStage, CliError> {
    let data = simulate_classification(
        CLASSIFICATION_N,
        CLASSIFICATION_COEFFICIENTS,
        ctx.seed(&[stage::CLASSIFICATION, 0]),
    )?;
    ctx.csv("classification_data.csv", |b| data.write_csv(b))?;
    let model = ModelSpec::classification(2, Link::Logit)?;
    let draws = fit(
        &model,
        &data,
        &report_fit_config(ctx.seed(&[stage::CLASSIFICATION, 1])),
    )?;
    ctx.csv("classification_draws.csv", |b| draws.write_csv(b))?;

    let mut max_identity_error: f64 = 0.0;
    let mut rows = Vec::new();
    for (x, y) in data.rows() {
        let m = member(&model, &draws, x.to_vec())?;
        max_identity_error = max_identity_error.max(identity_error(&m.uncertainty));
        let u = m.uncertainty;
        rows.push(
            [
                x[0],
                x[1],
                y,
                u.mu_bar,
                u.sigma_mu,
                u.aleatoric,
                u.epistemic,
            ]
            .iter()
            .map(f64::to_string)
            .collect(),
        );
    }
    ctx.csv("classification_points.csv", |b| {
        write_rows(
            b,
            &[
                "x1",
                "x2",
                "y",
                "mu_bar",
                "sigma_mu",
                "aleatoric",
                "epistemic",
            ],
            &rows,
        )
    })?;

    let x1 = grid(-3.0, 3.0, 0.25);
    let band: BoundaryBand = decision_boundary_band(&draws, &model, &x1, LEVEL)?;
    ctx.csv("classification_boundary.csv", |b| band.write_csv(b))?;
    let widths = band.widths();
    let center_x1 = data.rows().map(|(x, _)| x[0]).sum::<f64>() / data.len() as f64;
    let center = x1
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - center_x1).abs().total_cmp(&(b.1 - center_x1).abs()))
        .map_or(0, |(i, _)| i);

    let [q0, q1] = matched_pair(&model, &draws, &data, PAIR_PROBABILITY)?;
    let pair = [member(&model, &draws, q0)?, member(&model, &draws, q1)?];
    for m in &pair {
        max_identity_error = max_identity_error.max(identity_error(&m.uncertainty));
    }
    let out = ClassificationStage {
        fit: FitSummary::of(&draws),
        epistemic_ratio: pair[1].uncertainty.epistemic / pair[0].uncertainty.epistemic,
        aleatoric_ratio: pair[1].uncertainty.aleatoric / pair[0].uncertainty.aleatoric,
        pair,
        band_center_x1: x1[center],
        band_center_width: widths[center],
        band_left_width: widths[0],
        band_right_width: widths[widths.len() - 1],
        max_identity_error,
    };
    ctx.json("classification.json", &out)?;
    Ok(out)
}

fn seed_ensemble(ctx: &Ctx, data: &Dataset) -> Result<EnsembleStage, CliError> {
    let model = ModelSpec::regression(MeanForm::TrueModel);
    let seeds: Vec<u64> = (0..ENSEMBLE_SIZE)
        .map(|k| ctx.seed(&[stage::ENSEMBLE, k]))
        .collect();
    let fits = fit_ensemble(&model, data, &seeds, &FitConfig::default())?;
    let mut rng = rng_from_seed(ctx.seed(&[stage::ENSEMBLE, 100]));
    let members = fits
        .iter()
        .map(|d| posterior_predictive(&model, d, TAIL_X, 1, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let pooled = average_predictions(&members, None)?;
    let out = EnsembleStage {
        seeds,
        member_means: members.iter().map(PredictiveDistribution::mean).collect(),
        pooled: summarize(&pooled, LEVEL, Some((TAIL_THRESHOLD, Direction::Above)))?,
    };
    ctx.json("seed_ensemble.json", &out)?;
    Ok(out)
}

/// Coverage of central intervals on fresh draws from the generator at
/// uniformly placed inputs.
pub fn coverage(
    model: &ModelSpec,
    draws: &PosteriorDraws,
    points: usize,
    seed: u64,
) -> Result<CalibrationStage, CliError> {
    let mut rng = rng_from_seed(seed);
    let mut covered = 0;
    for i in 0..points {
        let x = rng.random::<f64>();
        let mu = MeanForm::TrueModel.eval_scalar(&[THETA1, THETA2], x)?;
        let y = DistributionSpec::normal(mu, SIGMA)?.sample_one(&mut rng);
        let mut pred_rng = rng_from_seed(derive_seed(seed, &[i as u64]));
        if interval(
            &posterior_predictive(model, draws, x, 1, &mut pred_rng)?,
            LEVEL,
        )?
        .contains(y)
        {
            covered += 1;
        }
    }
    Ok(CalibrationStage {
        points,
        covered,
        coverage: covered as f64 / points as f64,
    })
}

fn calibration(ctx: &Ctx, draws: &PosteriorDraws) -> Result<CalibrationStage, CliError> {
    let model = ModelSpec::regression(MeanForm::TrueModel);
    let out = coverage(
        &model,
        draws,
        CALIBRATION_POINTS,
        ctx.seed(&[stage::CALIBRATION]),
    )?;
    ctx.json("calibration.json", &out)?;
    Ok(out)
}
