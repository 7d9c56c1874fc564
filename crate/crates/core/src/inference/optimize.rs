//! Maximum a-posteriori point estimates by multi-start Nelder–Mead.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

use super::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlugInConfig {
    /// Random starting points drawn from the priors, in addition to the
    /// prior-center start.
    pub random_starts: usize,
    pub seed: u64,
    /// Iteration cap for a single simplex run.
    pub max_iter: usize,
    /// Simplex restarts from the incumbent optimum.
    pub polish_rounds: usize,
}

impl Default for PlugInConfig {
    fn default() -> Self {
        Self {
            random_starts: 19,
            seed: 0,
            max_iter: 20_000,
            polish_rounds: 12,
        }
    }
}

/// MAP estimate of all parameters (θ_μ then θ_σ).
pub fn plug_in_fit(model: &ModelSpec, data: &Dataset) -> Result<Vec<f64>> {
    plug_in_fit_with(model, data, &PlugInConfig::default())
}

pub fn plug_in_fit_with(model: &ModelSpec, data: &Dataset, cfg: &PlugInConfig) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::domain("plug-in fit of an empty dataset"));
    }
    let objective = |theta: &[f64]| -> f64 {
        match model.log_posterior(data, theta) {
            Ok(lp) if lp.is_finite() => -lp,
            _ => f64::INFINITY,
        }
    };
    // Surface structural errors (feature mismatch etc.) before optimizing.
    model.log_posterior(data, &prior_center(model))?;

    let mut rng = rng_from_seed(cfg.seed);
    let mut starts = vec![prior_center(model)];
    for _ in 0..cfg.random_starts {
        starts.push(
            model
                .priors()
                .iter()
                .map(|p| p.sample_one(&mut rng))
                .collect(),
        );
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut any_converged = false;
    for start in starts {
        if !objective(&start).is_finite() {
            continue;
        }
        let mut run = nelder_mead(&objective, &start, cfg.max_iter);
        let mut converged = run.converged;
        for _ in 0..cfg.polish_rounds {
            let again = nelder_mead(&objective, &run.x, cfg.max_iter);
            let gain = run.f - again.f;
            converged = again.converged;
            if again.f <= run.f {
                run = again;
            }
            if !(gain > 1e-12 * (1.0 + run.f.abs())) {
                break;
            }
        }
        any_converged |= converged;
        // Strict improvement only: ties keep the first-found optimum.
        if best.as_ref().is_none_or(|(_, f)| run.f < *f) {
            best = Some((run.x, run.f));
        }
    }
    match best {
        Some((x, f)) if f.is_finite() && any_converged => Ok(x),
        Some(_) => Err(Error::Fit {
            message: "optimizer did not converge from any starting point".into(),
            diagnostics: None,
        }),
        None => Err(Error::Fit {
            message: "no starting point has finite log posterior".into(),
            diagnostics: None,
        }),
    }
}

/// Location of each prior (its mean where finite), used as a deterministic
/// first start.
fn prior_center(model: &ModelSpec) -> Vec<f64> {
    model
        .priors()
        .iter()
        .map(|p| {
            let m = p.mean();
            if m.is_finite() {
                m
            } else {
                p.mu()
            }
        })
        .collect()
}

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
}

/// Nelder–Mead with dimension-adaptive coefficients (Gao & Han).
pub(crate) fn nelder_mead<F>(f: &F, start: &[f64], max_iter: usize) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let nf = n as f64;
    let (alpha, gamma, rho, shrink) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        let step = if v[i].abs() > 1e-8 {
            0.1 * v[i].abs()
        } else {
            0.05
        };
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut converged = false;
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let (f_best, f_worst) = (values[0], values[n]);
        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
            })
            .fold(0.0, f64::max);
        if f_best.is_finite()
            && ((f_worst - f_best).abs() <= 1e-14 * (1.0 + f_best.abs()) || diameter < 1e-11)
        {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / nf)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let xr = along(-alpha);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-alpha * gamma);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let xc = along(-alpha * rho);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(rho);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let v: Vec<f64> = simplex[0]
                        .iter()
                        .zip(&simplex[i])
                        .map(|(b, x)| b + shrink * (x - b))
                        .collect();
                    values[i] = f(&v);
                    simplex[i] = v;
                }
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        f: values[best],
        converged,
    }
}
