use std::io::{Read, Write};

use super::Diagnostics;
use crate::error::{Error, Result};

/// Retained posterior draws, one row per draw, rows grouped by chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    names: Vec<String>,
    values: Vec<f64>,
    chain: Vec<usize>,
    n_chains: usize,
    acceptance: Vec<f64>,
    diagnostics: Option<Diagnostics>,
}

impl PosteriorDraws {
    /// Builds draws from rows and their chain labels. Chain labels must be
    /// `0..n_chains` with every chain holding the same number of rows.
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>, chain: Vec<usize>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::spec("posterior draws need at least one row"));
        }
        if chain.len() != rows.len() {
            return Err(Error::spec("one chain label per draw required"));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != names.len()) {
            return Err(Error::spec(format!(
                "draw has {} values for {} parameters",
                r.len(),
                names.len()
            )));
        }
        let n_chains = chain.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0usize; n_chains];
        for &c in &chain {
            counts[c] += 1;
        }
        if counts.iter().any(|&c| c != counts[0]) {
            return Err(Error::spec("chains must hold equal numbers of draws"));
        }
        // Stable grouping by chain.
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by_key(|&i| chain[i]);
        let values = order
            .iter()
            .flat_map(|&i| rows[i].iter().copied())
            .collect();
        let chain = order.iter().map(|&i| chain[i]).collect();
        Ok(Self {
            names,
            values,
            chain,
            n_chains,
            acceptance: Vec::new(),
            diagnostics: None,
        })
    }

    /// `n` (at least one) copies of a single parameter vector in one chain.
    pub fn point_mass(names: Vec<String>, theta: &[f64], n: usize) -> Result<Self> {
        let n = n.max(1);
        Self::new(names, vec![theta.to_vec(); n], vec![0; n])
    }

    pub(crate) fn with_sampler_output(
        mut self,
        acceptance: Vec<f64>,
        diagnostics: Option<Diagnostics>,
    ) -> Self {
        self.acceptance = acceptance;
        self.diagnostics = diagnostics;
        self
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_draws(&self) -> usize {
        self.chain.len()
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_params();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks(self.n_params().max(1))
    }

    pub fn chain_of(&self, i: usize) -> usize {
        self.chain[i]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Draws of parameter `j` split by chain.
    pub fn chain_series(&self, j: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains];
        for (i, r) in self.rows().enumerate() {
            out[self.chain[i]].push(r[j]);
        }
        out
    }

    pub fn acceptance_rate(&self) -> &[f64] {
        &self.acceptance
    }

    pub fn diagnostics(&self) -> Option<&Diagnostics> {
        self.diagnostics.as_ref()
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.n_params())
            .map(|j| self.rows().map(|r| r[j]).sum::<f64>() / self.n_draws() as f64)
            .collect()
    }

    /// Sample standard deviations (divisor n − 1).
    pub fn sds(&self) -> Vec<f64> {
        let means = self.means();
        let n = self.n_draws() as f64;
        (0..self.n_params())
            .map(|j| {
                let ss: f64 = self.rows().map(|r| (r[j] - means[j]).powi(2)).sum();
                (ss / (n - 1.0).max(1.0)).sqrt()
            })
            .collect()
    }

    /// CSV with one column per parameter plus `chain`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.names.clone();
        header.push("chain".into());
        w.write_record(&header)?;
        for (i, r) in self.rows().enumerate() {
            let mut rec: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            rec.push(self.chain[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let chain_col = header.iter().position(|h| h == "chain");
        let names: Vec<String> = header.iter().filter(|h| *h != "chain").cloned().collect();
        let mut rows = Vec::new();
        let mut chain = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut row = Vec::with_capacity(names.len());
            for (c, field) in rec.iter().enumerate() {
                let field = field.trim();
                if Some(c) == chain_col {
                    chain.push(field.parse::<usize>().map_err(|_| {
                        Error::spec(format!("row {}: bad chain label '{field}'", line + 1))
                    })?);
                } else {
                    row.push(field.parse::<f64>().map_err(|_| {
                        Error::spec(format!("row {}: cannot parse '{field}'", line + 1))
                    })?);
                }
            }
            if chain_col.is_none() {
                chain.push(0);
            }
            rows.push(row);
        }
        Self::new(names, rows, chain)
    }
}
