//! The tabular dataset type and its CSV format.
//!
//! Single-feature data uses the columns `x, y` with optional `x_se, y_se`
//! (standard errors; a missing column means the values are exact).
//! Multi-feature data uses `x1, x2, …, y`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: usize,
    /// Row-major feature matrix.
    x: Vec<f64>,
    y: Vec<f64>,
    x_se: Option<Vec<f64>>,
    y_se: Option<Vec<f64>>,
    provenance: String,
}

impl Dataset {
    /// Single-feature dataset.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::with_features(1, x, y)
    }

    /// `x` holds `features` values per row, row-major.
    pub fn with_features(features: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if features == 0 {
            return Err(Error::spec("a dataset needs at least one feature"));
        }
        if x.len() != features * y.len() {
            return Err(Error::spec(format!(
                "feature matrix has {} values, expected {} rows x {features} features",
                x.len(),
                y.len()
            )));
        }
        Ok(Self {
            features,
            x,
            y,
            x_se: None,
            y_se: None,
            provenance: String::new(),
        })
    }

    /// Attaches per-row standard errors. Only single-feature data may carry
    /// `x_se`.
    pub fn with_errors(mut self, x_se: Option<Vec<f64>>, y_se: Option<Vec<f64>>) -> Result<Self> {
        for (name, se) in [("x_se", &x_se), ("y_se", &y_se)] {
            if let Some(se) = se {
                if se.len() != self.len() {
                    return Err(Error::spec(format!(
                        "{name} has {} entries for {} rows",
                        se.len(),
                        self.len()
                    )));
                }
                if let Some(bad) = se.iter().find(|&&s| !(s >= 0.0)) {
                    return Err(Error::domain(format!(
                        "{name} must be nonnegative, got {bad}"
                    )));
                }
            }
        }
        if x_se.is_some() && self.features != 1 {
            return Err(Error::spec(
                "x_se is only supported for single-feature data",
            ));
        }
        self.x_se = x_se;
        self.y_se = y_se;
        Ok(self)
    }

    pub fn with_provenance(mut self, note: impl Into<String>) -> Self {
        self.provenance = note.into();
        self
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.features..(i + 1) * self.features]
    }

    /// Feature values of a single-feature dataset.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x_se(&self) -> Option<&[f64]> {
        self.x_se.as_deref()
    }

    pub fn y_se(&self) -> Option<&[f64]> {
        self.y_se.as_deref()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// True when every outcome is 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.y.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.x.chunks(self.features).zip(self.y.iter().copied())
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(indices.len() * self.features);
        for &i in indices {
            x.extend_from_slice(self.x_row(i));
        }
        let pick = |v: &Vec<f64>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            features: self.features,
            x,
            y: pick(&self.y),
            x_se: self.x_se.as_ref().map(pick),
            y_se: self.y_se.as_ref().map(pick),
            provenance: self.provenance.clone(),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.features != other.features {
            return Err(Error::spec(
                "cannot concatenate datasets with different feature counts",
            ));
        }
        let join = |a: &Option<Vec<f64>>, b: &Option<Vec<f64>>, na: usize, nb: usize| {
            if a.is_none() && b.is_none() {
                return None;
            }
            let mut v = a.clone().unwrap_or_else(|| vec![0.0; na]);
            v.extend(b.clone().unwrap_or_else(|| vec![0.0; nb]));
            Some(v)
        };
        Ok(Dataset {
            features: self.features,
            x: [self.x.as_slice(), other.x.as_slice()].concat(),
            y: [self.y.as_slice(), other.y.as_slice()].concat(),
            x_se: join(&self.x_se, &other.x_se, self.len(), other.len()),
            y_se: join(&self.y_se, &other.y_se, self.len(), other.len()),
            provenance: self.provenance.clone(),
        })
    }

    /// Replaces feature and outcome values, keeping errors and provenance.
    pub(crate) fn replace_values(&self, x: Vec<f64>, y: Vec<f64>) -> Dataset {
        debug_assert_eq!(x.len(), self.x.len());
        debug_assert_eq!(y.len(), self.y.len());
        Dataset {
            x,
            y,
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = if self.features == 1 {
            vec!["x".into()]
        } else {
            (1..=self.features).map(|j| format!("x{j}")).collect()
        };
        header.push("y".into());
        if self.x_se.is_some() {
            header.push("x_se".into());
        }
        if self.y_se.is_some() {
            header.push("y_se".into());
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.x_row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[i].to_string());
            if let Some(se) = &self.x_se {
                rec.push(se[i].to_string());
            }
            if let Some(se) = &self.y_se {
                rec.push(se[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let col = |name: &str| header.iter().position(|h| h == name);

        let y_col = col("y").ok_or_else(|| Error::spec("dataset CSV needs a 'y' column"))?;
        let x_cols: Vec<usize> = if let Some(c) = col("x") {
            vec![c]
        } else {
            let mut cols = Vec::new();
            while let Some(c) = col(&format!("x{}", cols.len() + 1)) {
                cols.push(c);
            }
            cols
        };
        if x_cols.is_empty() {
            return Err(Error::spec(
                "dataset CSV needs an 'x' column or 'x1', 'x2', ... columns",
            ));
        }
        let x_se_col = col("x_se");
        let y_se_col = col("y_se");

        let (mut x, mut y) = (Vec::new(), Vec::new());
        let (mut x_se, mut y_se) = (Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |c: usize| -> Result<f64> {
                let s = rec.get(c).unwrap_or("").trim();
                s.parse::<f64>().map_err(|_| {
                    Error::spec(format!(
                        "row {}: cannot parse '{s}' in column '{}'",
                        line + 1,
                        header[c]
                    ))
                })
            };
            for &c in &x_cols {
                x.push(field(c)?);
            }
            y.push(field(y_col)?);
            if let Some(c) = x_se_col {
                x_se.push(field(c)?);
            }
            if let Some(c) = y_se_col {
                y_se.push(field(c)?);
            }
        }
        Dataset::with_features(x_cols.len(), x, y)?
            .with_errors(x_se_col.map(|_| x_se), y_se_col.map(|_| y_se))
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Ok(Self::read_csv(file)?.with_provenance(format!("file:{}", path.display())))
    }
}
