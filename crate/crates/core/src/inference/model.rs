//! Model specification: outcome distribution, mean function and link,
//! variance function, priors, and optional truncation of predictions.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::distributions::{DistributionSpec, Family};
use crate::error::{Error, Result};
use crate::functions::{Link, MeanForm, VarianceFunction};

/// Outcome distribution of a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Likelihood {
    Normal,
    StudentT { df: f64 },
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct ModelSpec {
    likelihood: Likelihood,
    mean: MeanForm,
    mean_link: Link,
    variance: Option<VarianceFunction>,
    priors: Vec<DistributionSpec>,
    truncation: Option<(Option<f64>, Option<f64>)>,
}

impl ModelSpec {
    /// Normal outcome, identity link, constant σ, default priors.
    pub fn regression(mean: MeanForm) -> Self {
        let mut m = Self {
            likelihood: Likelihood::Normal,
            mean,
            mean_link: Link::Identity,
            variance: Some(VarianceFunction::constant()),
            priors: Vec::new(),
            truncation: None,
        };
        m.priors = m.default_priors();
        m
    }

    /// Bernoulli outcome over `features` inputs with a linear predictor.
    pub fn classification(features: usize, link: Link) -> Result<Self> {
        let mut m = Self {
            likelihood: Likelihood::Bernoulli,
            mean: MeanForm::MultiLinear { features },
            mean_link: link,
            variance: None,
            priors: Vec::new(),
            truncation: None,
        };
        m.priors = m.default_priors();
        m.validate()?;
        Ok(m)
    }

    pub fn with_likelihood(mut self, likelihood: Likelihood) -> Result<Self> {
        self.likelihood = likelihood;
        if likelihood == Likelihood::Bernoulli {
            self.variance = None;
        } else if self.variance.is_none() {
            self.variance = Some(VarianceFunction::constant());
        }
        self.priors = self.default_priors();
        self.validate()?;
        Ok(self)
    }

    pub fn with_mean_link(mut self, link: Link) -> Result<Self> {
        self.mean_link = link;
        self.validate()?;
        Ok(self)
    }

    /// Swaps the variance function; priors revert to the defaults.
    pub fn with_variance(mut self, variance: VarianceFunction) -> Result<Self> {
        self.variance = Some(variance);
        self.priors = self.default_priors();
        self.validate()?;
        Ok(self)
    }

    /// One prior per parameter, θ_μ first then θ_σ.
    pub fn with_priors(mut self, priors: Vec<DistributionSpec>) -> Result<Self> {
        self.priors = priors;
        self.validate()?;
        Ok(self)
    }

    /// Replaces the prior of the named parameter.
    pub fn with_prior(mut self, name: &str, prior: DistributionSpec) -> Result<Self> {
        let j = self
            .parameter_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::spec(format!("model has no parameter named '{name}'")))?;
        self.priors[j] = prior;
        Ok(self)
    }

    /// Restricts predictions (not the likelihood) to `[lower, upper]`.
    pub fn with_truncation(mut self, lower: Option<f64>, upper: Option<f64>) -> Result<Self> {
        self.truncation = if lower.is_none() && upper.is_none() {
            None
        } else {
            Some((lower, upper))
        };
        self.validate()?;
        Ok(self)
    }

    /// Checks the likelihood, links, truncation and prior count agree.
    pub fn validate(&self) -> Result<()> {
        match self.likelihood {
            Likelihood::Bernoulli => {
                if !self.mean_link.is_unit_interval() {
                    return Err(Error::spec("a Bernoulli model needs a 0-1 mean link"));
                }
                if self.variance.is_some() {
                    return Err(Error::spec("a Bernoulli model has no variance function"));
                }
                if self.truncation.is_some() {
                    return Err(Error::spec(
                        "truncation does not apply to Bernoulli outcomes",
                    ));
                }
            }
            Likelihood::Normal | Likelihood::StudentT { .. } => {
                if self.variance.is_none() {
                    return Err(Error::spec(
                        "a continuous outcome model needs a variance function",
                    ));
                }
                if let Likelihood::StudentT { df } = self.likelihood {
                    if !(df > 0.0) {
                        return Err(Error::spec(format!(
                            "Student-t df must be positive, got {df}"
                        )));
                    }
                }
                if let Some((lo, hi)) = self.truncation {
                    if self.likelihood != Likelihood::Normal {
                        return Err(Error::spec(
                            "truncated prediction is only supported for Normal outcomes",
                        ));
                    }
                    if let (Some(lo), Some(hi)) = (lo, hi) {
                        if !(lo < hi) {
                            return Err(Error::spec("truncation needs lower < upper"));
                        }
                    }
                }
            }
        }
        if self.priors.len() != self.parameter_count() {
            return Err(Error::spec(format!(
                "model has {} parameters but {} priors",
                self.parameter_count(),
                self.priors.len()
            )));
        }
        Ok(())
    }

    /// Normal(0, 5) on coefficients, TruncatedNormal(0, 5, lower = 0) on
    /// rate and half-saturation parameters, TruncatedNormal(0, 2, lower = 0)
    /// on scale parameters.
    pub fn default_priors(&self) -> Vec<DistributionSpec> {
        let coef = DistributionSpec::normal(0.0, 5.0).expect("valid");
        let rate = DistributionSpec::truncated_normal(0.0, 5.0, Some(0.0), None).expect("valid");
        let scale = DistributionSpec::truncated_normal(0.0, 2.0, Some(0.0), None).expect("valid");
        let rates = self.mean.rate_parameters();
        let mut priors: Vec<DistributionSpec> = (0..self.mean.parameter_count())
            .map(|j| if rates.contains(&j) { rate } else { coef })
            .collect();
        if let Some(v) = &self.variance {
            let positive = v.positive_parameters();
            priors.extend((0..v.parameter_count()).map(|j| {
                if positive.contains(&j) {
                    scale
                } else {
                    coef
                }
            }));
        }
        priors
    }

    pub fn likelihood(&self) -> Likelihood {
        self.likelihood
    }

    pub fn mean(&self) -> MeanForm {
        self.mean
    }

    pub fn mean_link(&self) -> Link {
        self.mean_link
    }

    pub fn variance(&self) -> Option<VarianceFunction> {
        self.variance
    }

    pub fn priors(&self) -> &[DistributionSpec] {
        &self.priors
    }

    pub fn truncation(&self) -> Option<(Option<f64>, Option<f64>)> {
        self.truncation
    }

    pub fn is_classification(&self) -> bool {
        self.likelihood == Likelihood::Bernoulli
    }

    pub fn mean_parameter_count(&self) -> usize {
        self.mean.parameter_count()
    }

    pub fn parameter_count(&self) -> usize {
        self.mean.parameter_count() + self.variance.map_or(0, |v| v.parameter_count())
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = self.mean.parameter_names();
        if let Some(v) = &self.variance {
            names.extend(v.parameter_names());
        }
        names
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.parameter_count() {
            return Err(Error::spec(format!(
                "parameter vector has {} entries, model needs {}",
                theta.len(),
                self.parameter_count()
            )));
        }
        Ok(())
    }

    /// `μ = l_μ(f_μ(x; θ_μ))`.
    pub fn mu(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check_len(theta)?;
        let raw = self.mean.eval(&theta[..self.mean_parameter_count()], x)?;
        Ok(self.mean_link.apply(raw))
    }

    /// Outcome distribution `G(μ, σ)` at input `x`, ignoring truncation.
    pub fn outcome_distribution(&self, theta: &[f64], x: &[f64]) -> Result<DistributionSpec> {
        let mu = self.mu(theta, x)?;
        let sigma = || -> Result<f64> {
            let v = self.variance.expect("validated");
            v.eval(&theta[self.mean_parameter_count()..], mu)
        };
        match self.likelihood {
            Likelihood::Normal => DistributionSpec::normal(mu, sigma()?),
            Likelihood::StudentT { df } => DistributionSpec::student_t(mu, sigma()?, df),
            Likelihood::Bernoulli => DistributionSpec::bernoulli(mu),
        }
    }

    /// Outcome distribution with the model's truncation applied, if any.
    pub fn predictive_distribution(&self, theta: &[f64], x: &[f64]) -> Result<DistributionSpec> {
        let g = self.outcome_distribution(theta, x)?;
        match self.truncation {
            None => Ok(g),
            Some((lo, hi)) => {
                DistributionSpec::truncated_normal(g.mu(), g.sigma().expect("continuous"), lo, hi)
            }
        }
    }

    pub fn log_prior(&self, theta: &[f64]) -> Result<f64> {
        self.check_len(theta)?;
        Ok(self
            .priors
            .iter()
            .zip(theta)
            .map(|(p, &t)| p.log_density(t))
            .sum())
    }

    /// Sum of outcome log-densities over the data; negative infinity where
    /// the parameters fall outside the model's support.
    pub fn log_likelihood(&self, data: &Dataset, theta: &[f64]) -> Result<f64> {
        self.check_len(theta)?;
        if data.features() != self.mean.feature_count() {
            return Err(Error::domain(format!(
                "model expects {} features, data has {}",
                self.mean.feature_count(),
                data.features()
            )));
        }
        let mut total = 0.0;
        for (x, y) in data.rows() {
            let lp = match self.outcome_distribution(theta, x) {
                Ok(g) => g.log_density(y),
                Err(Error::InvalidSpec(_) | Error::Domain(_) | Error::Evaluation(_)) => {
                    return Ok(f64::NEG_INFINITY)
                }
                Err(e) => return Err(e),
            };
            if lp.is_nan() {
                return Ok(f64::NEG_INFINITY);
            }
            total += lp;
            if total == f64::NEG_INFINITY {
                break;
            }
        }
        Ok(total)
    }

    /// Unnormalized log posterior: log-likelihood plus log prior.
    pub fn log_posterior(&self, data: &Dataset, theta: &[f64]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::domain("log posterior of an empty dataset"));
        }
        let prior = self.log_prior(theta)?;
        if prior == f64::NEG_INFINITY {
            return Ok(prior);
        }
        Ok(self.log_likelihood(data, theta)? + prior)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawModel {
    distribution: RawLikelihood,
    mean: RawMean,
    #[serde(default)]
    variance: Option<VarianceFunction>,
    #[serde(default)]
    priors: Vec<DistributionSpec>,
    #[serde(default)]
    truncation: Option<RawTruncation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawLikelihood {
    family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    df: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawMean {
    form: String,
    #[serde(default = "identity_link")]
    link: Link,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<usize>,
}

fn identity_link() -> Link {
    Link::Identity
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawTruncation {
    #[serde(default)]
    lower: Option<f64>,
    #[serde(default)]
    upper: Option<f64>,
}

fn parse_form(form: &str, features: Option<usize>) -> Result<MeanForm> {
    Ok(match form {
        "Linear" => MeanForm::Linear,
        "Quadratic" => MeanForm::Quadratic,
        "Exp2" => MeanForm::Exp2,
        "Exp3" => MeanForm::Exp3,
        "MichaelisMenten" => MeanForm::MichaelisMenten,
        "TrueModel" => MeanForm::TrueModel,
        "MultiLinear" => MeanForm::MultiLinear {
            features: features.ok_or_else(|| Error::spec("MultiLinear needs 'features'"))?,
        },
        other => return Err(Error::spec(format!("unknown mean form '{other}'"))),
    })
}

fn form_name(form: MeanForm) -> &'static str {
    match form {
        MeanForm::Linear => "Linear",
        MeanForm::Quadratic => "Quadratic",
        MeanForm::Exp2 => "Exp2",
        MeanForm::Exp3 => "Exp3",
        MeanForm::MichaelisMenten => "MichaelisMenten",
        MeanForm::TrueModel => "TrueModel",
        MeanForm::MultiLinear { .. } => "MultiLinear",
    }
}

impl TryFrom<RawModel> for ModelSpec {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        let likelihood =
            match raw.distribution.family {
                Family::Normal => Likelihood::Normal,
                Family::StudentT => Likelihood::StudentT {
                    df: raw
                        .distribution
                        .df
                        .ok_or_else(|| Error::spec("StudentT needs 'df'"))?,
                },
                Family::Bernoulli => Likelihood::Bernoulli,
                Family::TruncatedNormal => return Err(Error::spec(
                    "use a Normal distribution with a 'truncation' block for truncated prediction",
                )),
            };
        let mean = parse_form(&raw.mean.form, raw.mean.features)?;
        let variance = match likelihood {
            Likelihood::Bernoulli => raw.variance,
            _ => Some(raw.variance.unwrap_or_else(VarianceFunction::constant)),
        };
        let mut model = ModelSpec {
            likelihood,
            mean,
            mean_link: raw.mean.link,
            variance,
            priors: raw.priors,
            truncation: raw
                .truncation
                .filter(|t| t.lower.is_some() || t.upper.is_some())
                .map(|t| (t.lower, t.upper)),
        };
        if model.priors.is_empty() {
            model.priors = model.default_priors();
        }
        model.validate()?;
        Ok(model)
    }
}

impl From<ModelSpec> for RawModel {
    fn from(m: ModelSpec) -> Self {
        let (family, df) = match m.likelihood {
            Likelihood::Normal => (Family::Normal, None),
            Likelihood::StudentT { df } => (Family::StudentT, Some(df)),
            Likelihood::Bernoulli => (Family::Bernoulli, None),
        };
        RawModel {
            distribution: RawLikelihood { family, df },
            mean: RawMean {
                form: form_name(m.mean).to_string(),
                link: m.mean_link,
                features: match m.mean {
                    MeanForm::MultiLinear { features } => Some(features),
                    _ => None,
                },
            },
            variance: m.variance,
            priors: m.priors,
            truncation: m
                .truncation
                .map(|(lower, upper)| RawTruncation { lower, upper }),
        }
    }
}
