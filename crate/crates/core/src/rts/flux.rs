//! Rates and steady-state weights from recorded fluxes.

use super::ensemble::FluxRecord;
use crate::error::{RateError, Result};
use crate::linalg::iterative::stationary;
use crate::linalg::CsrMatrix;
use crate::series::RateSeries;
use crate::spectral::{components, mean_passage_time, RateEstimate};
use crate::stats::{block_average, BlockEstimate};
use crate::transition::TransitionMatrix;
use nalgebra::DMatrix;

/// Mean flux from color `from` to color `to` after `burn_in` steps, with a
/// block-averaged standard error.
pub fn flux_estimate(records: &[FluxRecord], burn_in: usize, dt: f64, from: usize, to: usize) -> Result<BlockEstimate> {
    if records.len() <= burn_in {
        return Err(RateError::InsufficientData(format!(
            "{} flux records do not extend past a burn-in of {burn_in}",
            records.len()
        )));
    }
    let j: Vec<f64> = records[burn_in..].iter().map(|r| r.flux(from, to, dt)).collect();
    let mut est = block_average(&j);
    if est.stderr.is_nan() {
        est.stderr = 0.0;
    }
    Ok(est)
}

/// Forward (color 0 to 1) and backward (1 to 0) rates.
pub fn rate_from_flux(records: &[FluxRecord], burn_in: usize, dt: f64) -> Result<RateEstimate> {
    if records.first().map_or(0, |r| r.color_mass.len()) < 2 {
        return Err(RateError::invalid("two-way rates need at least two colors"));
    }
    let f = flux_estimate(records, burn_in, dt, 0, 1)?;
    let b = flux_estimate(records, burn_in, dt, 1, 0)?;
    Ok(RateEstimate {
        forward: f.mean,
        backward: b.mean,
        stderr_forward: Some(f.stderr),
        stderr_backward: Some(b.stderr),
    })
}

/// Running rate estimates at `points` evenly spaced record counts after burn-in,
/// indexed by simulated time.
pub fn flux_series(records: &[FluxRecord], burn_in: usize, dt: f64, points: usize) -> Result<RateSeries> {
    let n = records.len().saturating_sub(burn_in);
    if n == 0 || points == 0 {
        return Err(RateError::InsufficientData("no flux records after burn-in".into()));
    }
    let mut out = RateSeries::new();
    let points = points.min(n);
    for k in 1..=points {
        let end = burn_in + n * k / points;
        let est = rate_from_flux(&records[..end], burn_in, dt)?;
        out.push(end as f64 * dt, est);
    }
    Ok(out)
}

/// Steady-state weights of a flux graph: solves
/// `sum_j W_i N_ij / T_i = sum_j W_j N_ji / T_j` with `sum W = 1`.
pub fn steady_state_weights(counts: &DMatrix<f64>, times: &[f64]) -> Result<Vec<f64>> {
    let n = times.len();
    if counts.nrows() != n || counts.ncols() != n || n == 0 {
        return Err(RateError::invalid(
            "count matrix and residence times must agree in size",
        ));
    }
    if let Some(i) = times.iter().position(|t| !(*t > 0.0)) {
        return Err(RateError::numerical(
            "steady-state weights",
            format!("state {i} has no residence time"),
        ));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let rates = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { counts[(i, j)] / times[i] });
    let scale = (0..n).map(|i| rates.row(i).sum()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(RateError::numerical("steady-state weights", "no transitions recorded"));
    }
    let rows = (0..n)
        .map(|i| {
            let out: f64 = rates.row(i).sum() / scale;
            let mut r: Vec<(usize, f64)> = (0..n).filter(|&j| j != i).map(|j| (j, rates[(i, j)] / scale)).collect();
            r.push((i, 1.0 - out));
            r
        })
        .collect();
    let p = CsrMatrix::from_rows(n, rows)?;
    let comps = components(&p);
    if comps.len() > 1 {
        let listed: Vec<String> = comps.iter().map(|c| format!("{c:?}")).collect();
        return Err(RateError::Reducible {
            detail: format!("flux graph is not strongly connected: {}", listed.join(" ")),
            components: comps,
        });
    }
    let (_, w) = stationary(&p)?;
    Ok(w)
}

/// Mean passage times into color `target` from the color-to-color flux
/// matrix `F` (per unit time): `P = dt F` off the diagonal, completed to a
/// stochastic matrix, then the shared passage-time solver.
pub fn multicolor_mfpt(flux: &DMatrix<f64>, target: usize, dt: f64) -> Result<Vec<f64>> {
    let n = flux.nrows();
    if flux.ncols() != n || target >= n {
        return Err(RateError::invalid("flux matrix must be square and contain the target"));
    }
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut out = 0.0;
        for j in 0..n {
            if i != j {
                let v = dt * flux[(i, j)];
                if v < 0.0 {
                    return Err(RateError::invalid(format!("negative flux {i} -> {j}")));
                }
                p[(i, j)] = v;
                out += v;
            }
        }
        if out > 1.0 {
            return Err(RateError::invalid(format!("flux out of color {i} exceeds 1/dt")));
        }
        p[(i, i)] = 1.0 - out;
    }
    let p = TransitionMatrix::from_dense(&p, 1)?;
    let cemetery: Vec<bool> = (0..n).map(|i| i == target).collect();
    mean_passage_time(&p, &cemetery, dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(step: u64, mass: [f64; 2], t01: f64, t10: f64) -> FluxRecord {
        FluxRecord {
            step,
            color_mass: mass.to_vec(),
            transfers: vec![vec![0.0, t01], vec![t10, 0.0]],
        }
    }

    #[test]
    fn constant_flux() {
        let recs: Vec<FluxRecord> = (0..100).map(|s| record(s, [0.5, 0.5], 0.01, 0.02)).collect();
        let r = rate_from_flux(&recs, 10, 2.0).unwrap();
        assert!((r.forward - 0.01).abs() < 1e-15 && (r.backward - 0.02).abs() < 1e-15);
        assert!(r.stderr_forward.unwrap() < 1e-15);
        assert!(rate_from_flux(&recs, 100, 1.0).is_err());
    }

    #[test]
    fn single_transfer_flux() {
        let r = record(0, [0.4, 0.6], 0.001, 0.0);
        assert!((r.flux(0, 1, 0.5) - 0.001 / (0.4 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn steady_state_examples() {
        let sym = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 2.0, 0.0, 3.0, 1.0, 3.0, 0.0]);
        let w = steady_state_weights(&sym, &[1.0; 3]).unwrap();
        assert!(w.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-14));
        // N12 / T1 = 2 N21 / T2.
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        let w = steady_state_weights(&c, &[1.0, 2.0]).unwrap();
        assert!(
            (w[0] - 1.0 / 3.0).abs() < 1e-14 && (w[1] - 2.0 / 3.0).abs() < 1e-14,
            "{w:?}"
        );
        let split = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let err = steady_state_weights(&split, &[1.0; 3]).unwrap_err();
        assert!(matches!(err, RateError::Reducible { .. }));
    }

    #[test]
    fn detailed_balance_counts_give_stationary_weights() {
        let p = DMatrix::from_row_slice(3, 3, &[0.7, 0.2, 0.1, 0.3, 0.6, 0.1, 0.2, 0.2, 0.6]);
        let q = TransitionMatrix::from_dense(&p, 1).unwrap();
        let pi = crate::spectral::stationary_distribution(&q).unwrap();
        // Counts and residence times of a long run, up to scale.
        let counts = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1e4 * pi[i] * p[(i, j)] });
        let times: Vec<f64> = pi.iter().map(|x| 1e4 * x).collect();
        let w = steady_state_weights(&counts, &times).unwrap();
        for (a, b) in w.iter().zip(&pi) {
            assert!((a - b).abs() < 1e-10, "{w:?} vs {pi:?}");
        }
    }

    #[test]
    fn geometric_passage_times() {
        let p = 0.01;
        let dt = 0.5;
        let one = DMatrix::from_row_slice(2, 2, &[0.0, p / dt, 0.0, 0.0]);
        let t = multicolor_mfpt(&one, 1, dt).unwrap();
        assert!((t[0] - dt / p).abs() < 1e-9);
        let series = DMatrix::from_row_slice(3, 3, &[0.0, p / dt, 0.0, 0.0, 0.0, p / dt, 0.0, 0.0, 0.0]);
        let t = multicolor_mfpt(&series, 2, dt).unwrap();
        assert!((t[0] - 2.0 * dt / p).abs() < 1e-9);
        let none = DMatrix::zeros(2, 2);
        assert!(multicolor_mfpt(&none, 1, dt).is_err());
    }
}
