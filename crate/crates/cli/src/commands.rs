use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::Serialize;

use ppm_core::inference::{plug_in_fit_with, Diagnostics, PlugInConfig};
use ppm_core::prediction::{
    average_predictions, pi_width_curve, plug_in_predictive, posterior_predictive, summarize,
    write_samples_csv, PredictiveDistribution, PredictiveSummary,
};
use ppm_core::simulate::{
    simulate as simulate_data, simulate_classification, subsample_every_kth, SimulationConfig,
    XPlacement,
};
use ppm_core::uncertainty::{
    classify_predictive, decision_boundary_band, decompose_uncertainty, propagate_test_error,
    ClassificationUncertainty, MeasuredValue,
};
use ppm_core::{
    derive_seed, fit as fit_posterior, rng_from_seed, Dataset, FitConfig, ModelSpec, PosteriorDraws,
};

use crate::args::{Combine, DecomposeArgs, FitArgs, ModelArgs, PredictArgs, SimulateArgs};
use crate::output::{ensure_dir, write_csv_with, write_json, RunConfig};
use crate::CliError;

/// Largest R-hat accepted by `fit` without `--allow-unconverged`.
pub const MAX_R_HAT: f64 = 1.05;

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let data = if args.classification {
        let c = [
            args.coefficients[0],
            args.coefficients[1],
            args.coefficients[2],
        ];
        simulate_classification(args.n, c, args.seed)?
    } else {
        simulate_data(&SimulationConfig {
            n: args.n,
            theta1: args.theta1,
            theta2: args.theta2,
            sigma: args.sigma,
            seed: args.seed,
            placement: if args.random_x {
                XPlacement::Random
            } else {
                XPlacement::Grid
            },
        })?
    };
    let data = match args.subsample_k {
        Some(k) => subsample_every_kth(&data, k)?,
        None => data,
    };
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_csv_with(&args.out, |buf| data.write_csv(buf))
}

pub fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "dataset not found: {}",
            path.display()
        )));
    }
    Dataset::read_csv_path(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn load_model_file(path: &Path) -> Result<ModelSpec, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Usage(format!("model spec {}: {e}", path.display())))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| CliError::Usage(format!("model spec {}: {e}", path.display())))
}

fn load_model(args: &ModelArgs) -> Result<ModelSpec, CliError> {
    match (&args.model, args.form) {
        (Some(path), _) => load_model_file(path),
        (None, Some(form)) => Ok(ModelSpec::regression(form.into())),
        (None, None) => Err(CliError::Usage(
            "either --model or --form is required".into(),
        )),
    }
}

pub fn load_draws(path: &Path) -> Result<PosteriorDraws, CliError> {
    let file =
        File::open(path).map_err(|e| CliError::Usage(format!("draws {}: {e}", path.display())))?;
    PosteriorDraws::read_csv(std::io::BufReader::new(file))
        .map_err(|e| CliError::Usage(format!("draws {}: {e}", path.display())))
}

#[derive(Serialize)]
struct FitReport<'a> {
    mode: &'static str,
    converged: bool,
    error: Option<String>,
    parameters: Vec<String>,
    mean: Vec<f64>,
    sd: Vec<f64>,
    diagnostics: Option<&'a Diagnostics>,
}

#[derive(Serialize)]
struct PlugInReport {
    mode: &'static str,
    estimate: BTreeMap<String, f64>,
    log_posterior: f64,
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;
    let model = load_model(&args.model)?;
    model.validate()?;
    ensure_dir(&args.out_dir)?;
    let run = RunConfig::new("fit", args, args.seed);
    write_json(&args.out_dir.join("model.json"), &run, &model)?;

    if args.plug_in {
        let cfg = PlugInConfig {
            seed: args.seed,
            ..PlugInConfig::default()
        };
        let theta = plug_in_fit_with(&model, &data, &cfg)?;
        let single = PosteriorDraws::point_mass(model.parameter_names(), &theta, 1)?;
        write_csv_with(&args.out_dir.join("plug_in.csv"), |buf| {
            single.write_csv(buf)
        })?;
        let report = PlugInReport {
            mode: "plug-in",
            estimate: model
                .parameter_names()
                .into_iter()
                .zip(theta.iter().copied())
                .collect(),
            log_posterior: model.log_posterior(&data, &theta)?,
        };
        return write_json(&args.out_dir.join("plug_in.json"), &run, &report);
    }

    let cfg = FitConfig {
        chains: args.chains,
        warmup: args.warmup,
        samples: args.samples,
        seed: args.seed,
        ..FitConfig::default()
    };
    cfg.validate()?;
    let diag_path = args.out_dir.join("diagnostics.json");
    match fit_posterior(&model, &data, &cfg) {
        Ok(draws) => {
            write_csv_with(&args.out_dir.join("draws.csv"), |buf| draws.write_csv(buf))?;
            let max_r_hat = draws
                .diagnostics()
                .map_or(f64::INFINITY, Diagnostics::max_r_hat);
            let converged = max_r_hat <= MAX_R_HAT;
            let report = FitReport {
                mode: "posterior",
                converged,
                error: None,
                parameters: draws.names().to_vec(),
                mean: draws.means(),
                sd: draws.sds(),
                diagnostics: draws.diagnostics(),
            };
            write_json(&diag_path, &run, &report)?;
            if !converged && !args.allow_unconverged {
                return Err(CliError::Runtime(format!(
                    "max R-hat {max_r_hat:.4} exceeds {MAX_R_HAT}; rerun with more iterations or --allow-unconverged"
                )));
            }
            Ok(())
        }
        Err(ppm_core::Error::Fit {
            message,
            diagnostics,
        }) => {
            let report = FitReport {
                mode: "posterior",
                converged: false,
                error: Some(message.clone()),
                parameters: model.parameter_names(),
                mean: Vec::new(),
                sd: Vec::new(),
                diagnostics: diagnostics.as_deref(),
            };
            write_json(&diag_path, &run, &report)?;
            Err(CliError::Runtime(format!("fit failed: {message}")))
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct ModelPredictions {
    model: String,
    draws: String,
    predictions: Vec<PredictiveSummary>,
}

#[derive(Serialize)]
struct PredictReport {
    level: f64,
    combine: Option<Combine>,
    models: Vec<ModelPredictions>,
    combined: Option<Vec<PredictiveSummary>>,
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let mut models: Vec<ModelSpec> = if args.form.is_empty() {
        args.model
            .iter()
            .map(|p| load_model_file(p))
            .collect::<Result<_, _>>()?
    } else {
        args.form
            .iter()
            .map(|&f| ModelSpec::regression(f.into()))
            .collect()
    };
    let model_labels: Vec<String> = if args.form.is_empty() {
        args.model.iter().map(|p| p.display().to_string()).collect()
    } else {
        args.form.iter().map(|f| format!("{f:?}")).collect()
    };
    let n = args.draws.len();
    if models.len() != 1 && models.len() != n {
        return Err(CliError::Usage(format!(
            "{} model specs for {n} draws files; give one or one per file",
            models.len()
        )));
    }
    if let Some(lower) = args.truncate_lower {
        models = models
            .into_iter()
            .map(|m| m.with_truncation(Some(lower), None))
            .collect::<Result<_, _>>()?;
    }
    if args.combine == Combine::Pool && models.len() > 1 && models.windows(2).any(|w| w[0] != w[1])
    {
        return Err(CliError::Usage(
            "--combine pool needs a single model shared by every draws file".into(),
        ));
    }
    let draws: Vec<PosteriorDraws> = args
        .draws
        .iter()
        .map(|p| load_draws(p))
        .collect::<Result<_, _>>()?;
    let model_for = |i: usize| {
        if models.len() == 1 {
            &models[0]
        } else {
            &models[i]
        }
    };
    for (i, d) in draws.iter().enumerate() {
        let m = model_for(i);
        if d.n_params() != m.parameter_count() || d.names() != m.parameter_names().as_slice() {
            return Err(CliError::Usage(format!(
                "{} has parameters {:?}; the model expects {:?}",
                args.draws[i].display(),
                d.names(),
                m.parameter_names()
            )));
        }
        if m.is_classification() {
            return Err(CliError::Usage(
                "predict handles regression models; use decompose for classification".into(),
            ));
        }
    }
    let points = query_points(args)?;
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Usage(format!(
            "--level must lie in (0, 1), got {}",
            args.level
        )));
    }

    let per_model: Vec<Vec<PredictiveDistribution>> = draws
        .iter()
        .enumerate()
        .map(|(m, d)| {
            points
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    predict_one(
                        args,
                        model_for(m),
                        d,
                        x,
                        derive_seed(args.seed, &[m as u64, i as u64]),
                    )
                })
                .collect::<Result<Vec<_>, CliError>>()
        })
        .collect::<Result<_, _>>()?;

    let threshold = args.threshold.map(|t| (t, args.direction.0));
    let summaries = |preds: &[PredictiveDistribution]| -> Result<Vec<PredictiveSummary>, CliError> {
        preds
            .iter()
            .map(|p| summarize(p, args.level, threshold).map_err(CliError::from))
            .collect()
    };
    let models_out = per_model
        .iter()
        .enumerate()
        .map(|(m, preds)| {
            Ok(ModelPredictions {
                model: model_labels[if model_labels.len() == 1 { 0 } else { m }].clone(),
                draws: args.draws[m].display().to_string(),
                predictions: summaries(preds)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    ensure_dir(&args.out_dir)?;
    let run = RunConfig::new("predict", args, args.seed);
    let (combined, samples_of) = if n > 1 {
        let mixed: Vec<PredictiveDistribution> = (0..points.len())
            .map(|i| {
                let at: Vec<PredictiveDistribution> =
                    per_model.iter().map(|m| m[i].clone()).collect();
                average_predictions(&at, None)
            })
            .collect::<Result<_, _>>()?;
        if args.combine == Combine::Average {
            let table = pi_width_curve(&per_model, args.level)?;
            write_csv_with(&args.out_dir.join("widths.csv"), |buf| {
                table.write_csv(&model_labels_for(&model_labels, n), buf)
            })?;
        }
        (Some(summaries(&mixed)?), mixed)
    } else {
        (None, per_model[0].clone())
    };
    write_csv_with(&args.out_dir.join("samples.csv"), |buf| {
        write_samples_csv(&samples_of, buf)
    })?;
    let report = PredictReport {
        level: args.level,
        combine: (n > 1).then_some(args.combine),
        models: models_out,
        combined,
    };
    write_json(&args.out_dir.join("summary.json"), &run, &report)
}

fn model_labels_for(labels: &[String], n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            if labels.len() == 1 {
                format!("{}#{i}", labels[0])
            } else {
                labels[i].clone()
            }
        })
        .collect()
}

fn query_points(args: &PredictArgs) -> Result<Vec<f64>, CliError> {
    if let Some(g) = args.grid.iter().find(|g| **g != args.grid[0]) {
        return Err(CliError::Usage(format!(
            "inconsistent grids across models: {}:{}:{} vs {}:{}:{}",
            args.grid[0].start, args.grid[0].end, args.grid[0].step, g.start, g.end, g.step
        )));
    }
    if args.grid.len() > 1 && args.grid.len() != args.draws.len() {
        return Err(CliError::Usage(
            "give one --grid, or one per --draws file".into(),
        ));
    }
    let mut points = args.x.clone();
    if let Some(g) = args.grid.first() {
        points.extend(g.points());
    }
    if points.is_empty() {
        return Err(CliError::Usage(
            "no query points; pass --x or --grid".into(),
        ));
    }
    Ok(points)
}

fn predict_one(
    args: &PredictArgs,
    model: &ModelSpec,
    draws: &PosteriorDraws,
    x: f64,
    seed: u64,
) -> Result<PredictiveDistribution, CliError> {
    let mut rng = rng_from_seed(seed);
    let pred = if let Some(se) = args.x_se {
        propagate_test_error(model, draws, MeasuredValue::new(x, se)?, args.n_x, &mut rng)?
    } else if draws.n_draws() == 1 {
        plug_in_predictive(model, draws.row(0), x, args.plug_in_samples, &mut rng)?
    } else {
        posterior_predictive(model, draws, x, args.per_draw, &mut rng)?
    };
    Ok(pred)
}

#[derive(Serialize)]
struct DecompositionRecord {
    x: Vec<f64>,
    y_predictive: f64,
    #[serde(flatten)]
    uncertainty: ClassificationUncertainty,
}

#[derive(Serialize)]
struct DecomposeReport {
    records: Vec<DecompositionRecord>,
    boundary: Option<BoundarySummary>,
}

#[derive(Serialize)]
struct BoundarySummary {
    level: f64,
    points: usize,
    skipped_draws: usize,
}

pub fn decompose(args: &DecomposeArgs) -> Result<(), CliError> {
    let model = load_model_file(&args.model)?;
    if !model.is_classification() {
        return Err(CliError::Usage(
            "decompose needs a classification (Bernoulli) model".into(),
        ));
    }
    let draws = load_draws(&args.draws)?;
    if draws.n_params() != model.parameter_count() {
        return Err(CliError::Usage(format!(
            "draws have {} parameters; the model expects {}",
            draws.n_params(),
            model.parameter_count()
        )));
    }
    let records = args
        .query
        .iter()
        .map(|q| {
            let c = classify_predictive(&model, &draws, &q.0)?;
            Ok(DecompositionRecord {
                x: q.0.clone(),
                y_predictive: c.y_predictive,
                uncertainty: decompose_uncertainty(&c.p_draws)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    ensure_dir(&args.out_dir)?;
    let run = RunConfig::new("decompose", args, 0);
    let boundary = match &args.boundary_grid {
        Some(g) => {
            let band = decision_boundary_band(&draws, &model, &g.points(), args.level)?;
            write_csv_with(&args.out_dir.join("boundary.csv"), |buf| {
                band.write_csv(buf)
            })?;
            Some(BoundarySummary {
                level: band.level,
                points: band.x1.len(),
                skipped_draws: band.skipped,
            })
        }
        None => None,
    };
    write_json(
        &args.out_dir.join("decomposition.json"),
        &run,
        &DecomposeReport { records, boundary },
    )
}
