//! Coarse Markov state models: partitions, lumped matrices, rates versus lag
//! time, and the error analysis of sampled matrices.

pub mod coarse;
pub mod nonmarkov;
pub mod partition;
pub mod sensitivity;

pub use coarse::{coarse_empirical, coarse_from_fine, coarse_series, lift, lump, resample_rows, CoarseMatrix, Source};
pub use nonmarkov::non_markovity;
pub use partition::{optimal_cells, CellPartition, Geometry, SiteMap};
pub use sensitivity::{
    eigen_sensitivity, msm_statistical_error, ErrorDecomposition, SensitivityMatrix, StatisticalError,
};

use crate::dynamics::Dynamics;
use crate::error::{RateError, Result};
use crate::linalg::dense::eigenvalues;
use crate::series::RateSeries;
use crate::spectral::{
    check_irreducible, rate_from_gap, relaxation_gap, stationary_distribution, BasinSpec, RateEstimate,
};
use crate::transition::TransitionMatrix;

/// Log-spaced default lags, in steps.
pub const DEFAULT_TAUS: [usize; 10] = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000];

/// `1 - mu_2` of a coarse matrix. Irreducible matrices use the
/// cancellation-free solver; a sampled matrix that happens to be reducible
/// falls back to dense eigenvalues.
pub fn coarse_gap(p: &CoarseMatrix) -> Result<f64> {
    if p.dim() < 2 {
        return Err(RateError::invalid("a single cell has no relaxation mode"));
    }
    match check_irreducible(p.matrix.csr()) {
        Ok(()) => relaxation_gap(&p.matrix),
        Err(e) if p.source == Source::Analytic => Err(e),
        Err(_) => {
            log::warn!("sampled coarse matrix at lag {} is reducible", p.tau);
            let ev = eigenvalues(&p.matrix.to_dense())?;
            Ok(1.0 - ev[1].re)
        }
    }
}

/// Two-state rates `lambda_2 rho(B-bar)` and `lambda_2 rho(A-bar)` from a
/// coarse matrix; `mass` holds the stationary masses `(rho(A-bar), rho(B-bar))`.
/// Sampled matrices get error bars from [`msm_statistical_error`].
pub fn msm_rates(p: &CoarseMatrix, mass: (f64, f64), dt: f64) -> Result<RateEstimate> {
    if p.tau == 0 {
        return Err(RateError::invalid("rates need a positive lag"));
    }
    let gap = coarse_gap(p)?;
    if !(gap < 1.0) {
        return Err(RateError::numerical(
            "msm rate",
            format!("mu_2 = {} is not positive", 1.0 - gap),
        ));
    }
    let lambda = rate_from_gap(gap, p.tau, dt);
    let (ra, rb) = mass;
    let mut est = RateEstimate {
        forward: lambda * rb,
        backward: lambda * ra,
        stderr_forward: None,
        stderr_backward: None,
    };
    if let Some(n) = p.samples_per_row {
        let rel = msm_statistical_error(&p.matrix, n as f64, dt)?.relative;
        est.stderr_forward = Some(rel * est.forward);
        est.stderr_backward = Some(rel * est.backward);
    }
    Ok(est)
}

/// Exact MSM rates at each lag in `taus`.
pub fn rate_vs_lagtime(
    q: &TransitionMatrix,
    map: &SiteMap,
    taus: &[usize],
    dt: f64,
    basins: &BasinSpec,
) -> Result<RateSeries> {
    if basins.len() != q.dim() {
        return Err(RateError::invalid(
            "basin specification does not match the matrix dimension",
        ));
    }
    let mass = basins.split_mass(&stationary_distribution(q)?);
    let mut out = RateSeries::new();
    for p in coarse_series(q, map, taus)? {
        out.push(p.tau as f64, msm_rates(&p, mass, dt)?);
    }
    Ok(out)
}

/// How many trajectories each row of a sampled matrix gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleBudget {
    PerRow(usize),
    /// Fixed number of dynamics steps per row: `n = steps / tau`.
    StepsPerRow(usize),
}

impl SampleBudget {
    pub fn samples(&self, tau: usize) -> usize {
        match *self {
            SampleBudget::PerRow(n) => n,
            SampleBudget::StepsPerRow(s) => (s / tau.max(1)).max(1),
        }
    }
}

/// Sampled MSM rates with error bars at each lag.
pub fn rate_vs_lagtime_empirical<D: Dynamics>(
    dynamics: &D,
    map: &SiteMap,
    taus: &[usize],
    budget: SampleBudget,
    seed: u64,
    mass: (f64, f64),
) -> Result<RateSeries> {
    if taus.is_empty() || taus[0] == 0 || taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RateError::invalid("lags must be positive and strictly ascending"));
    }
    let mut out = RateSeries::new();
    for &tau in taus {
        let p = coarse_empirical(dynamics, map, tau, budget.samples(tau), seed)?;
        out.push(tau as f64, msm_rates(&p, mass, dynamics.dt())?);
    }
    Ok(out)
}
