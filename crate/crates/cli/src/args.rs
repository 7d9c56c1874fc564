use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ppm_core::prediction::Direction;
use ppm_core::MeanForm;

#[derive(Parser, Debug)]
#[command(name = "ppm", version)]
#[command(about = "Probabilistic predictive models: simulate, fit, predict, decompose")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate the saturating dose-response data or the two-feature
    /// classification data.
    Simulate(SimulateArgs),
    /// Sample the posterior of a model (or find its MAP with --plug-in).
    Fit(FitArgs),
    /// Predictive distributions, intervals and exceedance probabilities.
    Predict(PredictArgs),
    /// Outcome/parameter uncertainty split for a classification model.
    Decompose(DecomposeArgs),
    /// Run every demonstration pipeline into one directory.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Predict(_) => "predict",
            Command::Decompose(_) => "decompose",
            Command::Report(_) => "report",
        }
    }

    /// Master seed of commands that draw random numbers.
    pub fn seed_mut(&mut self) -> Option<&mut u64> {
        match self {
            Command::Simulate(a) => Some(&mut a.seed),
            Command::Fit(a) => Some(&mut a.seed),
            Command::Predict(a) => Some(&mut a.seed),
            Command::Decompose(_) => None,
            Command::Report(a) => Some(&mut a.seed),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimulateArgs {
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 3.25, allow_negative_numbers = true)]
    pub theta1: f64,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pub theta2: f64,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true, value_parser = nonnegative)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Two-feature binary data instead of the regression example.
    #[arg(long)]
    pub classification: bool,
    /// Classification coefficients θ0,θ1,θ2.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 1.5, -1.5], allow_negative_numbers = true)]
    pub coefficients: Vec<f64>,
    /// Keep only rows k, 2k, 3k, ...
    #[arg(long)]
    pub subsample_k: Option<usize>,
    /// Uniform random x instead of an even grid.
    #[arg(long)]
    pub random_x: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ModelArgs {
    /// Model specification JSON.
    #[arg(long, conflicts_with = "form")]
    pub model: Option<PathBuf>,
    /// Built-in regression model with default priors, as an alternative
    /// to --model.
    #[arg(long, value_enum)]
    pub form: Option<FormArg>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FitArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Directory for the draws CSV and diagnostics JSON.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 1000)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// MAP point estimate instead of posterior draws.
    #[arg(long)]
    pub plug_in: bool,
    /// Exit successfully even when some R-hat exceeds 1.05.
    #[arg(long)]
    pub allow_unconverged: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PredictArgs {
    /// Model specification JSON; give one, or one per --draws file.
    #[arg(long, required_unless_present = "form")]
    pub model: Vec<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "model")]
    pub form: Vec<FormArg>,
    /// Posterior draws CSV; repeat to combine several fits.
    #[arg(long, required = true)]
    pub draws: Vec<PathBuf>,
    /// Query inputs.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Vec<f64>,
    /// Query grid `start:end:step`; one shared or one per model.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Vec<Grid>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    #[arg(long, default_value = "above")]
    pub direction: DirectionArg,
    #[arg(long, allow_negative_numbers = true)]
    pub truncate_lower: Option<f64>,
    /// Standard error of the query input.
    #[arg(long, value_parser = nonnegative)]
    pub x_se: Option<f64>,
    /// Input draws per query when --x-se is given.
    #[arg(long, default_value_t = 1000)]
    pub n_x: usize,
    /// How several --draws files are combined.
    #[arg(long, value_enum, default_value_t = Combine::Average)]
    pub combine: Combine,
    #[arg(long, default_value_t = 1)]
    pub per_draw: usize,
    /// Samples for a single-row (plug-in) parameter file.
    #[arg(long, default_value_t = 4000)]
    pub plug_in_samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub draws: PathBuf,
    /// Feature vector `x1,x2,...`; repeat for several queries.
    #[arg(long, required = true, allow_hyphen_values = true)]
    pub query: Vec<Features>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// x1 grid `start:end:step` for the decision-boundary band.
    #[arg(long, allow_hyphen_values = true)]
    pub boundary_grid: Option<Grid>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormArg {
    Linear,
    Quadratic,
    Exp2,
    Exp3,
    MichaelisMenten,
    True,
}

impl From<FormArg> for MeanForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Linear => MeanForm::Linear,
            FormArg::Quadratic => MeanForm::Quadratic,
            FormArg::Exp2 => MeanForm::Exp2,
            FormArg::Exp3 => MeanForm::Exp3,
            FormArg::MichaelisMenten => MeanForm::MichaelisMenten,
            FormArg::True => MeanForm::TrueModel,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    /// Mixture of different models' predictions.
    Average,
    /// Pool fits of one model (seed ensembles, generated datasets).
    Pool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct DirectionArg(pub Direction);

impl FromStr for DirectionArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<Direction>()
            .map(DirectionArg)
            .map_err(|e| e.to_string())
    }
}

/// Inclusive evenly spaced grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, end, step] = parts[..] else {
            return Err(format!("grid must be start:end:step, got '{s}'"));
        };
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad grid value '{v}': {e}"))
        };
        let grid = Grid {
            start: num(start)?,
            end: num(end)?,
            step: num(step)?,
        };
        if !(grid.step > 0.0)
            || !(grid.end >= grid.start)
            || !grid.end.is_finite()
            || !grid.start.is_finite()
        {
            return Err(format!("grid needs start <= end and step > 0, got '{s}'"));
        }
        if (grid.end - grid.start) / grid.step > 1e6 {
            return Err(format!("grid '{s}' has too many points"));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Features(pub Vec<f64>);

impl FromStr for Features {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad feature '{v}': {e}"))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Features)
    }
}

fn nonnegative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a nonnegative number, got {s}"))
    }
}
