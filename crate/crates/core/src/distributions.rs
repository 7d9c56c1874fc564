//! Data-generating distributions: Normal, Student-t, Bernoulli and a
//! (one- or two-sided) truncated Normal.

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{
    invert_cdf, ln_gamma, norm_cdf, norm_quantile, norm_sf, student_t_cdf, LN_SQRT_2PI,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Normal,
    StudentT,
    Bernoulli,
    TruncatedNormal,
}

/// A validated distribution. Construct through [`DistributionSpec::normal`]
/// and friends; all operations assume the invariants checked there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct DistributionSpec {
    family: Family,
    mu: f64,
    sigma: f64,
    df: f64,
    lower: f64,
    upper: f64,
}

/// JSON shape: `{"family", "mu", "sigma", "df", "lower", "upper"}`, with
/// unused fields and infinite bounds written as `null`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawDistribution {
    family: Family,
    mu: f64,
    #[serde(default)]
    sigma: Option<f64>,
    #[serde(default)]
    df: Option<f64>,
    #[serde(default)]
    lower: Option<f64>,
    #[serde(default)]
    upper: Option<f64>,
}

impl TryFrom<RawDistribution> for DistributionSpec {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        let need_sigma = || {
            raw.sigma
                .ok_or_else(|| Error::spec(format!("{:?} requires sigma", raw.family)))
        };
        match raw.family {
            Family::Normal => Self::normal(raw.mu, need_sigma()?),
            Family::StudentT => {
                let df = raw.df.ok_or_else(|| Error::spec("StudentT requires df"))?;
                Self::student_t(raw.mu, need_sigma()?, df)
            }
            Family::Bernoulli => Self::bernoulli(raw.mu),
            Family::TruncatedNormal => {
                Self::truncated_normal(raw.mu, need_sigma()?, raw.lower, raw.upper)
            }
        }
    }
}

impl From<DistributionSpec> for RawDistribution {
    fn from(d: DistributionSpec) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        RawDistribution {
            family: d.family,
            mu: d.mu,
            sigma: (d.family != Family::Bernoulli).then_some(d.sigma),
            df: (d.family == Family::StudentT).then_some(d.df),
            lower: (d.family == Family::TruncatedNormal)
                .then(|| finite(d.lower))
                .flatten(),
            upper: (d.family == Family::TruncatedNormal)
                .then(|| finite(d.upper))
                .flatten(),
        }
    }
}

fn check_location(mu: f64) -> Result<()> {
    if !mu.is_finite() {
        return Err(Error::spec(format!("location must be finite, got {mu}")));
    }
    Ok(())
}

fn check_scale(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::spec(format!(
            "scale must be positive and finite, got {sigma}"
        )));
    }
    Ok(())
}

impl DistributionSpec {
    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        check_location(mu)?;
        check_scale(sigma)?;
        Ok(Self {
            family: Family::Normal,
            mu,
            sigma,
            df: f64::INFINITY,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        })
    }

    pub fn student_t(mu: f64, sigma: f64, df: f64) -> Result<Self> {
        check_location(mu)?;
        check_scale(sigma)?;
        if !(df > 0.0) || df.is_nan() {
            return Err(Error::spec(format!(
                "degrees of freedom must be positive, got {df}"
            )));
        }
        Ok(Self {
            family: Family::StudentT,
            mu,
            sigma,
            df,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        })
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::spec(format!(
                "Bernoulli probability must lie in [0, 1], got {p}"
            )));
        }
        Ok(Self {
            family: Family::Bernoulli,
            mu: p,
            sigma: f64::NAN,
            df: f64::NAN,
            lower: 0.0,
            upper: 1.0,
        })
    }

    /// Normal restricted to `[lower, upper]`; `None` leaves that side open.
    pub fn truncated_normal(
        mu: f64,
        sigma: f64,
        lower: Option<f64>,
        upper: Option<f64>,
    ) -> Result<Self> {
        check_location(mu)?;
        check_scale(sigma)?;
        let lower = lower.unwrap_or(f64::NEG_INFINITY);
        let upper = upper.unwrap_or(f64::INFINITY);
        if lower.is_nan() || upper.is_nan() || !(lower < upper) {
            return Err(Error::spec(format!(
                "truncation bounds must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        let spec = Self {
            family: Family::TruncatedNormal,
            mu,
            sigma,
            df: f64::INFINITY,
            lower,
            upper,
        };
        if !(spec.truncated_mass() > 0.0) {
            return Err(Error::spec(format!(
                "truncation interval [{lower}, {upper}] holds no probability mass for Normal({mu}, {sigma})"
            )));
        }
        Ok(spec)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Location; the success probability for Bernoulli.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> Option<f64> {
        (self.family != Family::Bernoulli).then_some(self.sigma)
    }

    pub fn df(&self) -> Option<f64> {
        (self.family == Family::StudentT).then_some(self.df)
    }

    /// Support bounds (infinite where open).
    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    fn std_bounds(&self) -> (f64, f64) {
        (
            (self.lower - self.mu) / self.sigma,
            (self.upper - self.mu) / self.sigma,
        )
    }

    /// Probability of the untruncated Normal inside the truncation bounds.
    fn truncated_mass(&self) -> f64 {
        let (a, b) = self.std_bounds();
        if a > 0.0 {
            norm_sf(a) - norm_sf(b)
        } else {
            norm_cdf(b) - norm_cdf(a)
        }
    }

    pub fn log_density(&self, y: f64) -> f64 {
        match self.family {
            Family::Normal => {
                let z = (y - self.mu) / self.sigma;
                -0.5 * z * z - LN_SQRT_2PI - self.sigma.ln()
            }
            Family::StudentT => {
                let nu = self.df;
                let z = (y - self.mu) / self.sigma;
                ln_gamma(0.5 * (nu + 1.0))
                    - ln_gamma(0.5 * nu)
                    - 0.5 * (nu * std::f64::consts::PI).ln()
                    - self.sigma.ln()
                    - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
            }
            Family::Bernoulli => {
                if y == 1.0 {
                    self.mu.ln()
                } else if y == 0.0 {
                    (1.0 - self.mu).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Family::TruncatedNormal => {
                if y < self.lower || y > self.upper || y.is_nan() {
                    return f64::NEG_INFINITY;
                }
                let z = (y - self.mu) / self.sigma;
                -0.5 * z * z - LN_SQRT_2PI - self.sigma.ln() - self.truncated_mass().ln()
            }
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self.family {
            Family::Normal => norm_cdf((y - self.mu) / self.sigma),
            Family::StudentT => student_t_cdf((y - self.mu) / self.sigma, self.df),
            Family::Bernoulli => {
                if y < 0.0 {
                    0.0
                } else if y < 1.0 {
                    1.0 - self.mu
                } else {
                    1.0
                }
            }
            Family::TruncatedNormal => {
                if y <= self.lower {
                    return 0.0;
                }
                if y >= self.upper {
                    return 1.0;
                }
                let (a, _) = self.std_bounds();
                let z = (y - self.mu) / self.sigma;
                let inside = if a > 0.0 {
                    norm_sf(a) - norm_sf(z)
                } else {
                    norm_cdf(z) - norm_cdf(a)
                };
                (inside / self.truncated_mass()).clamp(0.0, 1.0)
            }
        }
    }

    /// Inverse CDF for `p` in the open interval (0, 1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!(
                "quantile level must lie in (0, 1), got {p}"
            )));
        }
        Ok(self.quantile_unchecked(p))
    }

    fn quantile_unchecked(&self, p: f64) -> f64 {
        match self.family {
            Family::Normal => self.mu + self.sigma * norm_quantile(p),
            Family::StudentT => {
                let t = invert_cdf(|t| student_t_cdf(t, self.df), p, 0.0, 1.0, 1e-13);
                self.mu + self.sigma * t
            }
            Family::Bernoulli => {
                if p <= 1.0 - self.mu {
                    0.0
                } else {
                    1.0
                }
            }
            Family::TruncatedNormal => {
                let (a, b) = self.std_bounds();
                let mass = self.truncated_mass();
                // Work in whichever tail keeps the arithmetic away from 1.
                let z = if a > 0.0 {
                    -norm_quantile(norm_sf(a) - p * mass)
                } else {
                    norm_quantile(norm_cdf(a) + p * mass)
                };
                (self.mu + self.sigma * z.clamp(a, b)).clamp(self.lower, self.upper)
            }
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            Family::Normal => {
                let z: f64 = StandardNormal.sample(rng);
                self.mu + self.sigma * z
            }
            Family::StudentT => {
                let z: f64 = StandardNormal.sample(rng);
                let chi2 = rand_distr::ChiSquared::new(self.df)
                    .expect("validated df")
                    .sample(rng);
                self.mu + self.sigma * z / (chi2 / self.df).sqrt()
            }
            Family::Bernoulli => {
                if rng.random::<f64>() < self.mu {
                    1.0
                } else {
                    0.0
                }
            }
            Family::TruncatedNormal => self.quantile_unchecked(open_unit(rng)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    /// Mean of the distribution (finite for StudentT only when df > 1).
    pub fn mean(&self) -> f64 {
        match self.family {
            Family::Normal | Family::Bernoulli => self.mu,
            Family::StudentT => {
                if self.df > 1.0 {
                    self.mu
                } else {
                    f64::NAN
                }
            }
            Family::TruncatedNormal => {
                let (a, b) = self.std_bounds();
                let pdf = |z: f64| {
                    if z.is_finite() {
                        crate::special::norm_pdf(z)
                    } else {
                        0.0
                    }
                };
                self.mu + self.sigma * (pdf(a) - pdf(b)) / self.truncated_mass()
            }
        }
    }
}

/// Uniform draw on the open interval (0, 1).
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn construction_rejects_invalid_parameters() {
        assert!(DistributionSpec::normal(0.0, 0.0).is_err());
        assert!(DistributionSpec::normal(0.0, -1.0).is_err());
        assert!(DistributionSpec::student_t(0.0, 1.0, 0.0).is_err());
        assert!(DistributionSpec::bernoulli(1.5).is_err());
        assert!(DistributionSpec::bernoulli(-0.1).is_err());
        assert!(DistributionSpec::truncated_normal(0.0, 1.0, Some(1.0), Some(1.0)).is_err());
        assert!(DistributionSpec::truncated_normal(0.0, 1.0, Some(2.0), Some(1.0)).is_err());
    }

    #[test]
    fn log_density_examples() {
        let n = DistributionSpec::normal(0.0, 1.0).unwrap();
        assert!((n.log_density(0.0) + 0.918_938_533_204_672_7).abs() < 1e-15);
        let b = DistributionSpec::bernoulli(0.75).unwrap();
        assert!((b.log_density(1.0) - 0.75f64.ln()).abs() < 1e-15);
        assert_eq!(b.log_density(0.5), f64::NEG_INFINITY);
        let t = DistributionSpec::truncated_normal(0.0, 1.0, Some(0.0), None).unwrap();
        assert_eq!(t.log_density(-0.5), f64::NEG_INFINITY);
        // half-normal density at 0 is 2 φ(0)
        assert!((t.log_density(0.0) - (2.0f64.ln() - 0.918_938_533_204_672_7)).abs() < 1e-14);
    }

    #[test]
    fn cdf_examples() {
        let n = DistributionSpec::normal(0.0, 1.0).unwrap();
        assert_eq!(n.cdf(0.0), 0.5);
        let n = DistributionSpec::normal(1.0, 0.1).unwrap();
        assert!((n.cdf(1.2) - 0.977_249_868_051_820_8).abs() < 1e-12);
        let t = DistributionSpec::truncated_normal(0.0, 1.0, Some(0.0), None).unwrap();
        assert_eq!(t.cdf(0.0), 0.0);
        assert!((t.cdf(1.0) - (norm_cdf(1.0) - 0.5) * 2.0).abs() < 1e-14);
    }

    #[test]
    fn quantile_examples() {
        let n = DistributionSpec::normal(0.0, 1.0).unwrap();
        assert_eq!(n.quantile(0.5).unwrap(), 0.0);
        assert!((n.quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-9);
        let cauchy = DistributionSpec::student_t(0.0, 1.0, 1.0).unwrap();
        assert!((cauchy.quantile(0.75).unwrap() - 1.0).abs() < 1e-9);
        assert!(n.quantile(0.0).is_err());
        assert!(n.quantile(1.0).is_err());
        assert!(n.quantile(f64::NAN).is_err());
    }

    #[test]
    fn bernoulli_cdf_and_quantile() {
        let b = DistributionSpec::bernoulli(0.75).unwrap();
        assert_eq!(b.cdf(-0.1), 0.0);
        assert_eq!(b.cdf(0.0), 0.25);
        assert_eq!(b.cdf(1.0), 1.0);
        assert_eq!(b.quantile(0.25).unwrap(), 0.0);
        assert_eq!(b.quantile(0.26).unwrap(), 1.0);
    }

    #[test]
    fn sampling_matches_closed_form_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = DistributionSpec::bernoulli(0.75).unwrap();
        let m = b.sample(&mut rng, 100_000).iter().sum::<f64>() / 1e5;
        assert!((m - 0.75).abs() < 0.01, "{m}");

        let t = DistributionSpec::truncated_normal(0.0, 1.0, Some(0.0), None).unwrap();
        let draws = t.sample(&mut rng, 100_000);
        assert!(draws.iter().all(|&v| v >= 0.0));
        let m = draws.iter().sum::<f64>() / 1e5;
        let half_normal_mean = (2.0 / std::f64::consts::PI).sqrt();
        assert!((m - half_normal_mean).abs() < 0.01, "{m}");
        assert!((t.mean() - half_normal_mean).abs() < 1e-14);
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let d = DistributionSpec::student_t(1.0, 2.0, 3.0).unwrap();
        let a = d.sample(&mut ChaCha8Rng::seed_from_u64(5), 50);
        let b = d.sample(&mut ChaCha8Rng::seed_from_u64(5), 50);
        assert_eq!(a, b);
    }

    #[test]
    fn upper_tail_truncation_is_stable() {
        // Lower bound eight sds above the mean: naive Φ(b) - Φ(a) underflows to 0.
        let t = DistributionSpec::truncated_normal(0.0, 1.0, Some(8.0), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = t.sample(&mut rng, 1000);
        assert!(draws.iter().all(|&v| (8.0..9.5).contains(&v)));
        assert!(t.log_density(8.1).is_finite());
        let q = t.quantile(0.5).unwrap();
        assert!((t.cdf(q) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn json_shape() {
        let t = DistributionSpec::truncated_normal(0.0, 2.0, Some(0.0), None).unwrap();
        let v = serde_json::to_value(t).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"family": "TruncatedNormal", "mu": 0.0, "sigma": 2.0,
                               "df": null, "lower": 0.0, "upper": null})
        );
        let back: DistributionSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, t);
        let bad = serde_json::json!({"family": "Normal", "mu": 0.0, "sigma": 0.0});
        assert!(serde_json::from_value::<DistributionSpec>(bad).is_err());
    }
}
