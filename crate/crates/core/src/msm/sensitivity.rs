//! Eigenvalue sensitivity and the sampling error of MSM rates.

use crate::error::{RateError, Result};
use crate::spectral::{spectral_decompose, SpectralDecomposition, IMAG_TOL};
use crate::transition::TransitionMatrix;
use nalgebra::DMatrix;

/// `d mu_2 / d P_ij = s_i r_j` with `s . r = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrix {
    pub entries: DMatrix<f64>,
    pub mu2: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl SensitivityMatrix {
    /// Largest `|a_ij a_kl - a_il a_kj|` over all 2x2 minors.
    pub fn max_minor(&self) -> f64 {
        let a = &self.entries;
        let n = a.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for k in i + 1..n {
                for j in 0..n {
                    for l in j + 1..n {
                        worst = worst.max((a[(i, j)] * a[(k, l)] - a[(i, l)] * a[(k, j)]).abs());
                    }
                }
            }
        }
        worst
    }

    /// First-order change of `mu_2` under a perturbation `dp`.
    pub fn predict(&self, dp: &DMatrix<f64>) -> f64 {
        self.entries.component_mul(dp).sum()
    }
}

/// Second eigenpair, normalized so that `s . r = 1`.
fn second_pair(p: &TransitionMatrix) -> Result<(SpectralDecomposition, Vec<f64>, Vec<f64>)> {
    let n = p.dim();
    if n < 2 {
        return Err(RateError::invalid("a single state has no second eigenvalue"));
    }
    let dec = spectral_decompose(p, n.min(3))?;
    let mut s = dec.left[1].clone();
    let r = dec.right[1].clone();
    let sr: f64 = s.iter().zip(&r).map(|(a, b)| a * b).sum();
    if sr.abs() < 1e-300 {
        return Err(RateError::numerical(
            "second eigenpair",
            "left and right vectors are orthogonal",
        ));
    }
    s.iter_mut().for_each(|v| *v /= sr);
    Ok((dec, s, r))
}

/// Ranks beyond this skip the O(n^4) minor check in [`eigen_sensitivity`].
const MINOR_CHECK_LIMIT: usize = 64;

pub fn eigen_sensitivity(p: &TransitionMatrix) -> Result<SensitivityMatrix> {
    let (dec, s, r) = second_pair(p)?;
    let mu = &dec.eigenvalues;
    if dec.imaginary[1].abs() > IMAG_TOL {
        return Err(RateError::numerical("eigen sensitivity", "mu_2 is complex"));
    }
    if (mu[0] - mu[1]).abs() <= 1e-10 || (mu.len() > 2 && (mu[1] - mu[2]).abs() <= 1e-10) {
        return Err(RateError::numerical(
            "eigen sensitivity",
            format!("mu_2 = {} is degenerate; its eigenvector is not unique", mu[1]),
        ));
    }
    let n = p.dim();
    let out = SensitivityMatrix {
        entries: DMatrix::from_fn(n, n, |i, j| s[i] * r[j]),
        mu2: mu[1],
        left: s,
        right: r,
    };
    if n <= MINOR_CHECK_LIMIT {
        let scale = out.entries.amax().max(1.0);
        let minor = out.max_minor();
        if minor > 1e-10 * scale * scale {
            return Err(RateError::numerical(
                "eigen sensitivity",
                format!("outer product not rank 1 (minor {minor:e})"),
            ));
        }
    }
    Ok(out)
}

/// Factors of the relative rate error
/// `1/sqrt(n tau/dt) * 1/sqrt(lambda_2 dt) * sqrt(sum_i s_i^2 sigma_i^2) / (exp(-lambda_2 tau) sqrt(lambda_2 tau))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorDecomposition {
    pub cost: f64,
    pub time_scale: f64,
    pub lag_factor: f64,
}

impl ErrorDecomposition {
    pub fn product(&self) -> f64 {
        self.cost * self.time_scale * self.lag_factor
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticalError {
    pub mu2: f64,
    pub lambda2: f64,
    pub sigma_mu2: f64,
    /// `sigma(lambda_2) / lambda_2`.
    pub relative: f64,
    /// Standard deviation of `r_2` under each row distribution.
    pub row_sigma: Vec<f64>,
    /// Same estimate in factored form; uses `1/n` where `sigma_mu2` uses `1/(n+1)`.
    pub decomposition: ErrorDecomposition,
}

/// Predicted sampling error of `mu_2` and `lambda_2` when every row of `p`
/// is estimated from `n` independent samples:
/// `sigma^2(mu_2) = 1/(n+1) sum_i s_i^2 sigma_i^2(r_2)`.
pub fn msm_statistical_error(p: &TransitionMatrix, n: f64, dt: f64) -> Result<StatisticalError> {
    if !(n >= 1.0) {
        return Err(RateError::invalid("need at least one sample per row"));
    }
    if !(dt > 0.0) || p.lag() == 0 {
        return Err(RateError::invalid("lag time must be positive"));
    }
    let (dec, s, r) = second_pair(p)?;
    let mu2 = dec.eigenvalues[1];
    if !(mu2 > 0.0) {
        return Err(RateError::numerical(
            "statistical error",
            format!("mu_2 = {mu2} gives no rate"),
        ));
    }
    let tau = p.lag() as f64 * dt;
    let lambda2 = -mu2.ln() / tau;
    let row_sigma: Vec<f64> = (0..p.dim())
        .map(|i| {
            let mean: f64 = p.csr().row(i).map(|(j, v)| v * r[j]).sum();
            p.csr()
                .row(i)
                .map(|(j, v)| v * (r[j] - mean).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let weighted: f64 = s.iter().zip(&row_sigma).map(|(a, b)| (a * b).powi(2)).sum();
    let sigma_mu2 = (weighted / (n + 1.0)).sqrt();
    let relative = if sigma_mu2 == 0.0 {
        0.0
    } else {
        sigma_mu2 / (mu2 * tau * lambda2)
    };
    let steps = n * p.lag() as f64;
    let decomposition = ErrorDecomposition {
        cost: 1.0 / steps.sqrt(),
        time_scale: 1.0 / (lambda2 * dt).sqrt(),
        lag_factor: weighted.sqrt() / ((-lambda2 * tau).exp() * (lambda2 * tau).sqrt()),
    };
    Ok(StatisticalError {
        mu2,
        lambda2,
        sigma_mu2,
        relative,
        row_sigma,
        decomposition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> TransitionMatrix {
        TransitionMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]), 1).unwrap()
    }

    #[test]
    fn two_state_sensitivity() {
        let s = eigen_sensitivity(&two_state()).unwrap();
        assert!((s.mu2 - 0.7).abs() < 1e-14);
        assert!((s.entries[(0, 0)] - 1.0 / 3.0).abs() < 1e-14);
        assert!((s.entries[(1, 1)] - 2.0 / 3.0).abs() < 1e-14);
        assert!(s.max_minor() < 1e-15);
    }

    #[test]
    fn identity_has_no_sampling_error() {
        let p = TransitionMatrix::from_dense(&DMatrix::identity(4, 4), 3).unwrap();
        let e = msm_statistical_error(&p, 100.0, 1.0);
        // mu_2 = 1 gives lambda_2 = 0; the error itself is zero.
        let e = e.unwrap();
        assert_eq!(e.sigma_mu2, 0.0);
        assert_eq!(e.relative, 0.0);
    }

    #[test]
    fn decomposition_matches_direct_form() {
        let p = two_state();
        let n = 1e4;
        let e = msm_statistical_error(&p, n, 0.5).unwrap();
        let direct = e.sigma_mu2 * ((n + 1.0) / n).sqrt() / (e.mu2 * (-e.mu2.ln()));
        assert!((e.decomposition.product() / direct - 1.0).abs() < 1e-12);
        assert!(eigen_sensitivity(&TransitionMatrix::from_dense(&DMatrix::identity(3, 3), 1).unwrap()).is_err());
    }
}
