//! Row-stochastic transition matrices.

use crate::error::{RateError, Result};
use crate::linalg::CsrMatrix;
use nalgebra::DMatrix;
use std::io::{BufRead, Write};

/// Tolerance on row sums accepted by [`TransitionMatrix::new`].
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Square row-stochastic matrix over labelled states, tagged with the lag
/// (in elementary steps) it represents.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    m: CsrMatrix,
    labels: Vec<String>,
    lag: usize,
}

impl TransitionMatrix {
    pub fn new(m: CsrMatrix, labels: Option<Vec<String>>, lag: usize) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(RateError::invalid(format!(
                "transition matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        for i in 0..n {
            let mut s = 0.0;
            for (j, v) in m.row(i) {
                if !(0.0..=1.0 + ROW_SUM_TOL).contains(&v) || !v.is_finite() {
                    return Err(RateError::invalid(format!("entry ({i}, {j}) = {v} outside [0, 1]")));
                }
                s += v;
            }
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(RateError::invalid(format!("row {i} sums to {s}, not 1")));
            }
        }
        let labels = labels.unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect());
        if labels.len() != n {
            return Err(RateError::invalid("label count does not match dimension"));
        }
        Ok(TransitionMatrix { m, labels, lag })
    }

    pub fn from_dense(d: &DMatrix<f64>, lag: usize) -> Result<Self> {
        Self::new(CsrMatrix::from_dense(d), None, lag)
    }

    /// Rescale rows to sum to one before validating. Used where rows are built
    /// from truncated kernels or counts.
    pub fn normalized(m: CsrMatrix, labels: Option<Vec<String>>, lag: usize) -> Result<Self> {
        let n = m.ncols();
        let rows = (0..m.nrows())
            .map(|i| {
                let s: f64 = m.row(i).map(|(_, v)| v).sum();
                if s > 0.0 {
                    m.row(i).map(|(j, v)| (j, v / s)).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        Self::new(CsrMatrix::from_rows(n, rows)?, labels, lag)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn csr(&self) -> &CsrMatrix {
        &self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m.get(i, j)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.m.to_dense()
    }

    /// Write as CSV: a header row of state labels, then one row per state.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.labels.join(","))?;
        let n = self.dim();
        for i in 0..n {
            let mut row = vec![0.0; n];
            for (j, v) in self.m.row(i) {
                row[j] = v;
            }
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, lag: usize) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| RateError::Parse("empty matrix file".into()))??;
        let labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let n = labels.len();
        let mut rows = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<(usize, f64)> = line
                .split(',')
                .enumerate()
                .map(|(j, s)| {
                    s.trim()
                        .parse::<f64>()
                        .map(|v| (j, v))
                        .map_err(|e| RateError::Parse(format!("row {i}, column {j}: {e}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != n {
                return Err(RateError::Parse(format!(
                    "row {i} has {} entries, expected {n}",
                    vals.len()
                )));
            }
            rows.push(vals);
        }
        Self::new(CsrMatrix::from_rows(n, rows)?, Some(labels), lag)
    }
}
