//! Weighted-ensemble simulation with walkers colored by the basin they last
//! visited. Rates come from the weight that changes color per step.

pub mod checkpoint;
pub mod ensemble;
pub mod flux;
pub mod resample;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use ensemble::{write_flux_csv, ColorSpec, Ensemble, FluxRecord, GroupFlux, RtsParams, Walker};
pub use flux::{flux_estimate, flux_series, multicolor_mfpt, rate_from_flux, steady_state_weights};
pub use resample::{resample_plan, ResamplePlan};

use crate::dynamics::Dynamics;
use crate::error::{RateError, Result};
use nalgebra::DMatrix;

/// Advance `steps` steps and return the flux records.
pub fn run<D: Dynamics>(dynamics: &D, ens: &mut Ensemble<D::State>, steps: usize) -> Result<Vec<FluxRecord>> {
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        out.push(ens.step(dynamics, None)?);
    }
    Ok(out)
}

/// Accelerate relaxation: run `steps` steps while counting group-to-group
/// transfers, solve for the steady-state group weights and rescale the
/// walkers to match. Only groups that held weight take part; the visited
/// flux graph must be strongly connected.
pub fn equilibrate<D: Dynamics>(dynamics: &D, ens: &mut Ensemble<D::State>, steps: usize) -> Result<Vec<FluxRecord>> {
    if steps == 0 {
        return Err(RateError::invalid("equilibration needs at least one step"));
    }
    let k = ens.colors().n_colors();
    let mut gf = GroupFlux::new(ens.partition().n_cells(), k);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        out.push(ens.step(dynamics, Some(&mut gf))?);
    }
    let visited: Vec<usize> = (0..gf.n_groups()).filter(|&g| gf.time[g] > 0.0).collect();
    let m = visited.len();
    let counts = DMatrix::from_fn(m, m, |a, b| gf.count(visited[a], visited[b]));
    let times: Vec<f64> = visited.iter().map(|&g| gf.time[g]).collect();
    let w = steady_state_weights(&counts, &times)?;
    let mut full = vec![0.0; gf.n_groups()];
    for (&g, v) in visited.iter().zip(w) {
        full[g] = v;
    }
    ens.reweight(dynamics, &full)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ChainDynamics;
    use crate::msm::SiteMap;
    use crate::spectral::{committor, stationary_distribution, BasinSpec};
    use crate::transition::TransitionMatrix;

    /// Birth-death chain with a bump in the middle.
    fn chain() -> (ChainDynamics, BasinSpec) {
        let e: [f64; 5] = [0.0, 1.0, 2.0, 1.0, 0.0];
        let n = e.len();
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in [i.wrapping_sub(1), i + 1] {
                if j < n {
                    p[(i, j)] = 0.25 * f64::min(1.0, (-(e[j] - e[i])).exp());
                }
            }
            p[(i, i)] = 1.0 - p.row(i).sum();
        }
        let q = TransitionMatrix::from_dense(&p, 1).unwrap();
        let basins = BasinSpec::new(vec![true, true, false, false, false], vec![0], vec![4]).unwrap();
        (ChainDynamics::new(q, Some(e.to_vec()), 1.0).unwrap(), basins)
    }

    fn ensemble(d: &ChainDynamics, basins: &BasinSpec, seed: u64) -> Ensemble<usize> {
        let colors = ColorSpec::two_basin(basins).unwrap();
        Ensemble::initialize(d, SiteMap::identity(5), colors, RtsParams::new(20, seed), &[0.5, 0.5]).unwrap()
    }

    /// Color-0 to color-1 flux per unit color-0 weight at steady state.
    fn exact_flux(d: &ChainDynamics, basins: &BasinSpec) -> f64 {
        let q = d.matrix();
        let pi = stationary_distribution(q).unwrap();
        let c = committor(q, basins).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..5 {
            let back = 1.0 - c[i];
            den += pi[i] * back;
            if i != 4 {
                num += pi[i] * back * q.get(i, 4);
            }
        }
        num / den
    }

    #[test]
    fn flux_matches_reactive_flux() {
        let (d, basins) = chain();
        let mut ens = ensemble(&d, &basins, 11);
        let recs = run(&d, &mut ens, 20_000).unwrap();
        let est = flux_estimate(&recs, 2_000, 1.0, 0, 1).unwrap();
        let exact = exact_flux(&d, &basins);
        assert!(
            (est.mean - exact).abs() < 4.0 * est.stderr + 0.01 * exact,
            "{est:?} vs {exact}"
        );
        assert!(ens.mass_drift().abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_resumable() {
        let (d, basins) = chain();
        let mut a = ensemble(&d, &basins, 3);
        run(&d, &mut a, 50).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&a, &mut buf).unwrap();
        let mut b: Ensemble<usize> = read_checkpoint(
            buf.as_slice(),
            SiteMap::identity(5),
            ColorSpec::two_basin(&basins).unwrap(),
        )
        .unwrap();
        assert_eq!(a.walkers, b.walkers);
        let ra = run(&d, &mut a, 50).unwrap();
        let rb = run(&d, &mut b, 50).unwrap();
        assert_eq!(ra, rb);
        let mut c = ensemble(&d, &basins, 3);
        run(&d, &mut c, 100).unwrap();
        assert_eq!(a.walkers, c.walkers);
        assert!(read_checkpoint::<usize, _>(
            &b"junk\n"[..],
            SiteMap::identity(5),
            ColorSpec::two_basin(&basins).unwrap()
        )
        .is_err());
    }

    #[test]
    fn equilibration_keeps_mass() {
        let (d, basins) = chain();
        let mut ens = ensemble(&d, &basins, 5);
        let m0 = ens.total_mass();
        equilibrate(&d, &mut ens, 200).unwrap();
        assert!((ens.total_mass() - m0).abs() < 1e-12);
        let mass = ens.color_mass();
        assert!(mass.iter().all(|m| *m > 0.0));
    }
}
