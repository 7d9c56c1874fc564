//! Rank-normalized split R-hat and bulk effective sample size.

use serde::{Deserialize, Serialize};

use super::PosteriorDraws;
use crate::error::{Error, Result};
use crate::special::norm_quantile;

/// R-hat above this marks a parameter as not converged.
pub const RHAT_FLAG_THRESHOLD: f64 = 1.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub parameter_names: Vec<String>,
    pub r_hat: Vec<f64>,
    pub ess_bulk: Vec<f64>,
    /// Per-chain acceptance rate over the sampling phase; empty when the
    /// draws did not come from the sampler.
    pub acceptance_rate: Vec<f64>,
    /// Parameters whose R-hat exceeds [`RHAT_FLAG_THRESHOLD`].
    pub flagged: Vec<String>,
}

impl Diagnostics {
    pub fn max_r_hat(&self) -> f64 {
        self.r_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess_bulk.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn diagnostics(draws: &PosteriorDraws) -> Result<Diagnostics> {
    if draws.n_chains() < 2 {
        return Err(Error::Diagnostics(format!(
            "diagnostics need at least 2 chains, got {}",
            draws.n_chains()
        )));
    }
    let mut r_hat = Vec::with_capacity(draws.n_params());
    let mut ess_bulk = Vec::with_capacity(draws.n_params());
    for (j, name) in draws.names().iter().enumerate() {
        let chains = draws.chain_series(j);
        let (r, e) =
            rank_normalized(&chains).map_err(|msg| Error::Diagnostics(format!("{name}: {msg}")))?;
        r_hat.push(r);
        ess_bulk.push(e);
    }
    let flagged = draws
        .names()
        .iter()
        .zip(&r_hat)
        .filter(|(_, &r)| r > RHAT_FLAG_THRESHOLD)
        .map(|(n, _)| n.clone())
        .collect();
    Ok(Diagnostics {
        parameter_names: draws.names().to_vec(),
        r_hat,
        ess_bulk,
        acceptance_rate: draws.acceptance_rate().to_vec(),
        flagged,
    })
}

/// Split R-hat and bulk ESS of one parameter, on rank-normalized draws.
pub fn rank_normalized(chains: &[Vec<f64>]) -> std::result::Result<(f64, f64), String> {
    let n = chains.first().map_or(0, Vec::len);
    if chains.iter().any(|c| c.len() != n) {
        return Err("chains have unequal lengths".into());
    }
    if n < 4 {
        return Err(format!("need at least 4 draws per chain, got {n}"));
    }
    if chains.iter().flatten().any(|v| !v.is_finite()) {
        return Err("non-finite draw".into());
    }
    if chains.iter().all(|c| variance(c) == 0.0) {
        return Err("all chains have zero variance".into());
    }
    let half = n / 2;
    let split: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..]])
        .collect();
    let z = rank_normalize(&split);
    let refs: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
    Ok((r_hat(&refs), ess(&refs)))
}

/// Replaces pooled values by normal scores of their fractional ranks,
/// `Φ⁻¹((r − 3/8) / (S + 1/4))`, averaging ranks over ties.
fn rank_normalize(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut order: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| c.iter().enumerate().map(move |(i, &v)| (v, ci, i)))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut start = 0;
    while start < total {
        let mut end = start + 1;
        while end < total && order[end].0 == order[start].0 {
            end += 1;
        }
        // 1-based average rank of the tie block
        let rank = 0.5 * ((start + 1) + end) as f64;
        let score = norm_quantile((rank - 0.375) / (total as f64 + 0.25));
        for &(_, ci, i) in &order[start..end] {
            out[ci][i] = score;
        }
        start = end;
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance (divisor n − 1).
fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn r_hat(chains: &[&[f64]]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| variance(c)).sum::<f64>() / m;
    let b = n * variance(&means);
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Autocovariance of `x` at lags `0..x.len()` (biased, divisor n).
fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    (0..n)
        .map(|lag| {
            d[..n - lag]
                .iter()
                .zip(&d[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
fn ess(chains: &[&[f64]]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len();
    let nf = n as f64;
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c)).collect();
    let chain_var: Vec<f64> = acov.iter().map(|a| a[0] * nf / (nf - 1.0)).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chain_var);
    let var_plus = w * (nf - 1.0) / nf + if m > 1.0 { variance(&means) } else { 0.0 };

    let rho = |t: usize| -> f64 {
        let mean_acov = acov.iter().map(|a| a[t]).sum::<f64>() / m;
        1.0 - (w - mean_acov) / var_plus
    };

    let mut rho_hat = vec![0.0; n];
    rho_hat[0] = 1.0;
    rho_hat[1] = rho(1);
    let mut t = 1;
    while t + 2 < n {
        let even = rho(t + 1);
        let odd = rho(t + 2);
        if even + odd < 0.0 {
            break;
        }
        rho_hat[t + 1] = even;
        rho_hat[t + 2] = odd;
        t += 2;
    }
    let max_t = t;
    // Geyer's monotone condition on successive pair sums.
    let mut k = 1;
    while k + 2 <= max_t {
        let prev = rho_hat[k - 1] + rho_hat[k];
        if rho_hat[k + 1] + rho_hat[k + 2] > prev {
            rho_hat[k + 1] = prev / 2.0;
            rho_hat[k + 2] = prev / 2.0;
        }
        k += 2;
    }
    let total = m * nf;
    let tau = -1.0 + 2.0 * rho_hat[..=max_t].iter().sum::<f64>();
    let tau = tau.max(1.0 / total.log10());
    total / tau
}
