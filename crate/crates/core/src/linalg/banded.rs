//! Banded LU factorization of M-matrices without subtractive cancellation.
//!
//! The matrix is `A = D - Q` where `Q >= 0` holds the off-diagonal magnitudes
//! and the diagonal is implied by the row sums `A 1 = leak >= 0`. Each pivot
//! is recomputed as the sum of the remaining off-diagonal row entries plus the
//! propagated leak, so all arithmetic involves nonnegative quantities
//! (the Grassmann-Taksar-Heyman trick). With `leak = 0` this factors the
//! singular generator `I - P` of an irreducible chain.

use crate::error::{RateError, Result};
use crate::linalg::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct MMatrixLu {
    n: usize,
    bl: usize,
    bu: usize,
    width: usize,
    /// Row-major band: entry (i, j) lives at `i * width + (j + bl - i)`.
    /// Strict lower part holds multipliers, strict upper part holds `Q` entries.
    band: Vec<f64>,
    pivots: Vec<f64>,
}

impl MMatrixLu {
    /// Factor `A` whose off-diagonal magnitudes are the off-diagonal entries of
    /// `q` (diagonal of `q` ignored) and whose row sums are `leak`.
    pub fn factor(q: &CsrMatrix, leak: &[f64]) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n || leak.len() != n {
            return Err(RateError::invalid("M-matrix factorization needs a square matrix"));
        }
        let (bl, bu) = q.bandwidth();
        let width = bl + bu + 1;
        let cells = n
            .checked_mul(width)
            .filter(|&c| c <= 400_000_000)
            .ok_or_else(|| RateError::Resource(format!("band storage for n={n}, width={width} too large")))?;
        let mut band = vec![0.0; cells];
        for i in 0..n {
            for (j, v) in q.row(i) {
                if j != i {
                    if v < 0.0 {
                        return Err(RateError::invalid(format!(
                            "negative off-diagonal weight at ({i}, {j})"
                        )));
                    }
                    band[i * width + j + bl - i] = v;
                }
            }
        }
        let mut leak = leak.to_vec();
        let mut pivots = vec![0.0; n];
        for k in 0..n {
            let jmax = (k + bu).min(n - 1);
            let row_k = k * width + bl - k;
            let mut s = leak[k];
            for j in k + 1..=jmax {
                s += band[row_k + j];
            }
            pivots[k] = s;
            if s <= 0.0 {
                if k + 1 == n {
                    continue;
                }
                return Err(RateError::numerical(
                    "M-matrix factorization",
                    format!("zero pivot at row {k}: state cannot reach later states"),
                ));
            }
            let imax = (k + bl).min(n - 1);
            for i in k + 1..=imax {
                let row_i = i * width + bl - i;
                let qik = band[row_i + k];
                if qik == 0.0 {
                    continue;
                }
                let m = qik / s;
                band[row_i + k] = m;
                for j in k + 1..=jmax {
                    if j != i {
                        let u = band[row_k + j];
                        if u != 0.0 {
                            band[row_i + j] += m * u;
                        }
                    }
                }
                leak[i] += m * leak[k];
            }
        }
        Ok(MMatrixLu {
            n,
            bl,
            bu,
            width,
            band,
            pivots,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    /// True when the last pivot vanished (singular generator).
    pub fn is_singular(&self) -> bool {
        self.pivots[self.n - 1] <= 0.0
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.band[i * self.width + j + self.bl - i]
    }

    /// Solve `A x = b` in place. For a singular generator the last unknown is
    /// set to zero, which yields one particular solution when `b` lies in the range.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let yk = b[k];
            if yk != 0.0 {
                for i in k + 1..=(k + self.bl).min(n - 1) {
                    b[i] += self.at(i, k) * yk;
                }
            }
        }
        for k in (0..n).rev() {
            let p = self.pivots[k];
            if p <= 0.0 {
                b[k] = 0.0;
                continue;
            }
            let mut acc = b[k];
            for j in k + 1..=(k + self.bu).min(n - 1) {
                acc += self.at(k, j) * b[j];
            }
            b[k] = acc / p;
        }
    }

    /// Solve `A^T x = b` in place (same singular convention as [`solve`](Self::solve)).
    pub fn solve_transpose(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.pivots[k];
            let mut acc = b[k];
            for i in k.saturating_sub(self.bu)..k {
                acc += self.at(i, k) * b[i];
            }
            b[k] = if p > 0.0 { acc / p } else { 0.0 };
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for i in k + 1..=(k + self.bl).min(n - 1) {
                acc += self.at(i, k) * b[i];
            }
            b[k] = acc;
        }
    }

    /// Left null vector of a singular generator, normalized to sum one.
    pub fn null_left(&self) -> Vec<f64> {
        let n = self.n;
        let mut rho = vec![0.0; n];
        rho[n - 1] = 1.0;
        for k in (0..n - 1).rev() {
            let mut acc = 0.0;
            for i in k + 1..=(k + self.bl).min(n - 1) {
                acc += self.at(i, k) * rho[i];
            }
            rho[k] = acc;
        }
        let total: f64 = rho.iter().sum();
        rho.iter_mut().for_each(|r| *r /= total);
        rho
    }
}

/// Multiply `x` by the generator `I - P` using only off-diagonal entries:
/// `(L x)_i = sum_{j != i} P_ij (x_i - x_j)`.
pub fn generator_mul(p: &CsrMatrix, x: &[f64]) -> Vec<f64> {
    (0..p.nrows())
        .map(|i| p.row(i).filter(|&(j, _)| j != i).map(|(j, v)| v * (x[i] - x[j])).sum())
        .collect()
}

/// `x^T (I - P)` using only off-diagonal entries.
pub fn generator_vec_mul(p: &CsrMatrix, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.ncols()];
    for i in 0..p.nrows() {
        for (j, v) in p.row(i) {
            if j != i {
                let f = x[i] * v;
                out[i] += f;
                out[j] -= f;
            }
        }
    }
    out
}
