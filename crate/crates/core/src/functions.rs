//! Mean functions, link functions and variance functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::norm_cdf;

/// Structural form of the mean function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeanForm {
    /// `θ0 + θ1·x`
    Linear,
    /// `θ0 + θ1·x + θ2·x²`
    Quadratic,
    /// `θ2·(1 − e^(−θ1·x))`, parameters ordered (θ1, θ2)
    Exp2,
    /// `θ3 + θ2·(1 − e^(−θ1·x))`, parameters ordered (θ1, θ2, θ3)
    Exp3,
    /// `θ1·x / (θ2 + x)`
    MichaelisMenten,
    /// `θ2 + (1 − e^(−θ1·x)) / (1 + e^(−θ1·x))`, the generating curve of the
    /// simulated running example.
    TrueModel,
    /// `θ0 + Σ θj·xj` over a feature vector; the classification predictor.
    MultiLinear { features: usize },
}

impl MeanForm {
    pub fn parameter_count(&self) -> usize {
        match self {
            MeanForm::Linear => 2,
            MeanForm::Quadratic => 3,
            MeanForm::Exp2 => 2,
            MeanForm::Exp3 => 3,
            MeanForm::MichaelisMenten => 2,
            MeanForm::TrueModel => 2,
            MeanForm::MultiLinear { features } => features + 1,
        }
    }

    /// Number of input features the form consumes.
    pub fn feature_count(&self) -> usize {
        match self {
            MeanForm::MultiLinear { features } => *features,
            _ => 1,
        }
    }

    /// Indices of rate and half-saturation parameters, which are positive
    /// for every curve the form is meant to describe.
    pub fn rate_parameters(&self) -> &'static [usize] {
        match self {
            MeanForm::TrueModel | MeanForm::Exp2 | MeanForm::Exp3 => &[0],
            MeanForm::MichaelisMenten => &[1],
            _ => &[],
        }
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let names: &[&str] = match self {
            MeanForm::Linear => &["theta0", "theta1"],
            MeanForm::Quadratic => &["theta0", "theta1", "theta2"],
            MeanForm::Exp2 => &["theta1", "theta2"],
            MeanForm::Exp3 => &["theta1", "theta2", "theta3"],
            MeanForm::MichaelisMenten => &["theta1", "theta2"],
            MeanForm::TrueModel => &["theta1", "theta2"],
            MeanForm::MultiLinear { features } => {
                return (0..=*features).map(|j| format!("theta{j}")).collect();
            }
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Evaluates the mean function at a (possibly multi-feature) input.
    pub fn eval(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        if theta.len() != self.parameter_count() {
            return Err(Error::spec(format!(
                "{self:?} takes {} parameters, got {}",
                self.parameter_count(),
                theta.len()
            )));
        }
        if x.len() != self.feature_count() {
            return Err(Error::domain(format!(
                "{self:?} takes {} features, got {}",
                self.feature_count(),
                x.len()
            )));
        }
        if let MeanForm::MultiLinear { .. } = self {
            return Ok(theta[0] + theta[1..].iter().zip(x).map(|(t, v)| t * v).sum::<f64>());
        }
        self.eval_scalar(theta, x[0])
    }

    /// Evaluates a single-feature form at scalar `x`.
    pub fn eval_scalar(&self, theta: &[f64], x: f64) -> Result<f64> {
        if theta.len() != self.parameter_count() {
            return Err(Error::spec(format!(
                "{self:?} takes {} parameters, got {}",
                self.parameter_count(),
                theta.len()
            )));
        }
        let v = match self {
            MeanForm::Linear => theta[0] + theta[1] * x,
            MeanForm::Quadratic => theta[0] + theta[1] * x + theta[2] * x * x,
            MeanForm::Exp2 => theta[1] * -(-theta[0] * x).exp_m1(),
            MeanForm::Exp3 => theta[2] + theta[1] * -(-theta[0] * x).exp_m1(),
            MeanForm::MichaelisMenten => {
                let denom = theta[1] + x;
                if denom == 0.0 {
                    return Err(Error::Evaluation(format!(
                        "Michaelis-Menten pole at x = {x} (theta2 = {})",
                        theta[1]
                    )));
                }
                theta[0] * x / denom
            }
            // (1 − e^(−u)) / (1 + e^(−u)) = tanh(u/2)
            MeanForm::TrueModel => theta[1] + (0.5 * theta[0] * x).tanh(),
            MeanForm::MultiLinear { features } => {
                if *features != 1 {
                    return Err(Error::domain(format!(
                        "MultiLinear with {features} features needs a feature vector"
                    )));
                }
                theta[0] + theta[1] * x
            }
        };
        Ok(v)
    }
}

/// Inverse link: maps an unconstrained value onto the allowed range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    /// Logistic, the inverse of the logit.
    Logit,
    /// Standard normal CDF.
    Probit,
    /// Standard Cauchy CDF.
    Cauchit,
    /// Inverse complementary log-log, `1 − exp(−exp(u))`.
    Cloglog,
    Softplus,
}

impl Link {
    pub fn apply(&self, u: f64) -> f64 {
        match self {
            Link::Identity => u,
            Link::Logit => {
                if u >= 0.0 {
                    1.0 / (1.0 + (-u).exp())
                } else {
                    let e = u.exp();
                    e / (1.0 + e)
                }
            }
            Link::Probit => norm_cdf(u),
            Link::Cauchit => 0.5 + u.atan() / std::f64::consts::PI,
            Link::Cloglog => -(-u.exp()).exp_m1(),
            Link::Softplus => softplus(u),
        }
    }

    /// Whether outputs are confined to (0, 1).
    pub fn is_unit_interval(&self) -> bool {
        matches!(
            self,
            Link::Logit | Link::Probit | Link::Cauchit | Link::Cloglog
        )
    }
}

/// `ln(1 + e^u)`, returning `u` itself once `e^(−u)` is below 1e-13.
pub fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u
    } else {
        u.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarianceForm {
    /// σ is a single positive parameter.
    Constant,
    /// σ = softplus(σ0 + σ1·μ).
    LinearInMu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawVariance")]
pub struct VarianceFunction {
    pub form: VarianceForm,
    pub link: Link,
}

#[derive(Deserialize)]
struct RawVariance {
    form: VarianceForm,
    link: Option<Link>,
}

impl TryFrom<RawVariance> for VarianceFunction {
    type Error = Error;

    fn try_from(raw: RawVariance) -> Result<Self> {
        let f = match raw.form {
            VarianceForm::Constant => Self::constant(),
            VarianceForm::LinearInMu => Self::linear_in_mu(),
        };
        match raw.link {
            Some(link) if link != f.link => Err(Error::spec(format!(
                "{:?} variance uses the {:?} link, got {link:?}",
                f.form, f.link
            ))),
            _ => Ok(f),
        }
    }
}

impl VarianceFunction {
    pub fn constant() -> Self {
        Self {
            form: VarianceForm::Constant,
            link: Link::Identity,
        }
    }

    pub fn linear_in_mu() -> Self {
        Self {
            form: VarianceForm::LinearInMu,
            link: Link::Softplus,
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self.form {
            VarianceForm::Constant => 1,
            VarianceForm::LinearInMu => 2,
        }
    }

    pub fn parameter_names(&self) -> Vec<String> {
        match self.form {
            VarianceForm::Constant => vec!["sigma".into()],
            VarianceForm::LinearInMu => vec!["sigma0".into(), "sigma1".into()],
        }
    }

    /// Indices (within θ_σ) of parameters that must stay positive.
    pub(crate) fn positive_parameters(&self) -> &'static [usize] {
        match self.form {
            VarianceForm::Constant => &[0],
            VarianceForm::LinearInMu => &[],
        }
    }

    pub fn eval(&self, theta: &[f64], mu: f64) -> Result<f64> {
        if theta.len() != self.parameter_count() {
            return Err(Error::spec(format!(
                "{:?} variance takes {} parameters, got {}",
                self.form,
                self.parameter_count(),
                theta.len()
            )));
        }
        match self.form {
            VarianceForm::Constant => {
                if theta[0] > 0.0 && theta[0].is_finite() {
                    Ok(theta[0])
                } else {
                    Err(Error::domain(format!(
                        "constant sigma must be positive, got {}",
                        theta[0]
                    )))
                }
            }
            VarianceForm::LinearInMu => {
                let s = softplus(theta[0] + theta[1] * mu);
                if s > 0.0 && s.is_finite() {
                    Ok(s)
                } else {
                    Err(Error::domain(format!(
                        "softplus variance underflowed to {s}"
                    )))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn true_model_examples() {
        let f = MeanForm::TrueModel;
        let th = [3.25, 0.2];
        assert_eq!(f.eval_scalar(&th, 0.0).unwrap(), 0.2);
        assert!((f.eval_scalar(&th, 1e6).unwrap() - 1.2).abs() < 1e-15);
        // 0.2 + tanh(1.625)
        assert!((f.eval_scalar(&th, 1.0).unwrap() - 1.125_346_225_311_741).abs() < 1e-12);
        // The displayed ratio form agrees with the tanh evaluation.
        let u: f64 = 3.25 * 0.37;
        let ratio = 0.2 + (1.0 - (-u).exp()) / (1.0 + (-u).exp());
        assert!((f.eval_scalar(&th, 0.37).unwrap() - ratio).abs() < 1e-15);
    }

    #[test]
    fn display_forms() {
        let x = 0.7;
        assert_eq!(
            MeanForm::Linear.eval_scalar(&[1.0, 2.0], x).unwrap(),
            1.0 + 2.0 * x
        );
        assert_eq!(
            MeanForm::Quadratic
                .eval_scalar(&[1.0, 2.0, 3.0], x)
                .unwrap(),
            1.0 + 2.0 * x + 3.0 * x * x
        );
        let e2 = 1.5 * (1.0 - (-2.0 * x).exp());
        assert!((MeanForm::Exp2.eval_scalar(&[2.0, 1.5], x).unwrap() - e2).abs() < 1e-15);
        assert!(
            (MeanForm::Exp3.eval_scalar(&[2.0, 1.5, 0.3], x).unwrap() - (e2 + 0.3)).abs() < 1e-15
        );
        assert_eq!(
            MeanForm::MichaelisMenten
                .eval_scalar(&[1.3, 0.4], 0.4)
                .unwrap(),
            0.65
        );
        assert_eq!(
            MeanForm::MultiLinear { features: 2 }
                .eval(&[1.0, 2.0, -3.0], &[0.5, 1.0])
                .unwrap(),
            1.0 + 1.0 - 3.0
        );
    }

    #[test]
    fn mean_errors() {
        assert!(matches!(
            MeanForm::TrueModel.eval_scalar(&[1.0], 0.0),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            MeanForm::MichaelisMenten.eval_scalar(&[1.0, 0.5], -0.5),
            Err(Error::Evaluation(_))
        ));
        assert!(MeanForm::MultiLinear { features: 2 }
            .eval(&[0.0; 3], &[1.0])
            .is_err());
    }

    #[test]
    fn link_examples() {
        assert_eq!(Link::Logit.apply(0.0), 0.5);
        assert!((Link::Cloglog.apply(0.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((Link::Softplus.apply(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(Link::Softplus.apply(50.0), 50.0);
        assert!((Link::Softplus.apply(30.0) - 30.0).abs() < 1e-12);
        assert_eq!(Link::Probit.apply(0.0), 0.5);
        assert_eq!(Link::Cauchit.apply(1.0), 0.75);
    }

    #[test]
    fn sigma_examples() {
        let c = VarianceFunction::constant();
        assert_eq!(c.eval(&[0.1], 123.0).unwrap(), 0.1);
        assert!(c.eval(&[0.0], 0.0).is_err());
        assert!(c.eval(&[-0.1], 0.0).is_err());
        let l = VarianceFunction::linear_in_mu();
        assert!((l.eval(&[0.0, 0.0], 7.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((l.eval(&[-1.0, 2.0], 0.5).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn variance_json_link_must_match_form() {
        let ok: VarianceFunction =
            serde_json::from_str(r#"{"form":"LinearInMu","link":"softplus"}"#).unwrap();
        assert_eq!(ok, VarianceFunction::linear_in_mu());
        assert!(serde_json::from_str::<VarianceFunction>(
            r#"{"form":"Constant","link":"softplus"}"#
        )
        .is_err());
    }

    const UNIT_LINKS: [Link; 4] = [Link::Logit, Link::Probit, Link::Cauchit, Link::Cloglog];

    proptest! {
        #[test]
        fn unit_links_bounded_and_increasing(u in -8.0f64..3.0, du in 1e-3f64..0.5) {
            for link in UNIT_LINKS {
                let a = link.apply(u);
                let b = link.apply(u + du);
                prop_assert!(a > 0.0 && a < 1.0, "{link:?}({u}) = {a}");
                prop_assert!(b > a, "{link:?} not increasing at {u}");
            }
            prop_assert!(Link::Softplus.apply(u + du) > Link::Softplus.apply(u));
        }

        #[test]
        fn symmetric_links(u in -20.0f64..20.0) {
            for link in [Link::Logit, Link::Probit, Link::Cauchit] {
                prop_assert!((link.apply(u) + link.apply(-u) - 1.0).abs() < 1e-14);
            }
        }

        #[test]
        fn sigma_always_positive(s0 in -30.0f64..30.0, s1 in -10.0f64..10.0, mu in -3.0f64..3.0) {
            let s = VarianceFunction::linear_in_mu().eval(&[s0, s1], mu).unwrap();
            prop_assert!(s > 0.0);
        }

        #[test]
        fn true_model_bounded(t1 in 1e-3f64..5.0, t2 in -5.0f64..5.0, x in 0.0f64..5.0) {
            let v = MeanForm::TrueModel.eval_scalar(&[t1, t2], x).unwrap();
            prop_assert!(v >= t2 && v < t2 + 1.0);
        }
    }
}
