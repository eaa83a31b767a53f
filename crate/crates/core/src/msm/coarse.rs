//! Coarse transition matrices: exact lumping of a fine chain, sampled
//! estimates, and the lift/lump maps between the two levels.

use super::partition::SiteMap;
use crate::dynamics::Dynamics;
use crate::error::{RateError, Result};
use crate::linalg::CsrMatrix;
use crate::rng::RngStream;
use crate::spectral::stationary_distribution;
use crate::transition::TransitionMatrix;
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::io::Write;

/// Largest propagated block (fine states times cells).
pub const MAX_BLOCK: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Analytic,
    Empirical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseMatrix {
    pub matrix: TransitionMatrix,
    pub tau: usize,
    pub source: Source,
    /// Raw end-cell counts, row by row (empirical only).
    pub counts: Option<Vec<Vec<u64>>>,
    /// Trajectories started per row (empirical only).
    pub samples_per_row: Option<u64>,
}

impl CoarseMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.matrix.write_csv(w)
    }

    /// Count matrix with the matrix labels as header; fails for analytic matrices.
    pub fn write_counts_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let counts = self
            .counts
            .as_ref()
            .ok_or_else(|| RateError::invalid("analytic coarse matrices carry no counts"))?;
        writeln!(w, "{}", self.matrix.labels().join(","))?;
        for row in counts {
            let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

fn cell_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("V{i}")).collect()
}

fn dense_to_transition(d: &DMatrix<f64>, lag: usize) -> Result<TransitionMatrix> {
    TransitionMatrix::normalized(CsrMatrix::from_dense(d), Some(cell_labels(d.nrows())), lag)
}

/// Exact coarse matrices `P(tau)` for an ascending list of lags.
///
/// Each cell's in-cell stationary density is pushed forward through the fine
/// chain one step at a time, so the cost is one sparse product per step for a
/// block of `n_fine x n_cells` entries. Column masses are checked after every
/// step; drift beyond 1e-8 is reported as a numerical failure.
pub fn coarse_series(q: &TransitionMatrix, map: &SiteMap, taus: &[usize]) -> Result<Vec<CoarseMatrix>> {
    let n = q.dim();
    let c = map.n_cells();
    if map.n_sites() != n {
        return Err(RateError::invalid(format!(
            "partition covers {} states, matrix has {n}",
            map.n_sites()
        )));
    }
    if taus.is_empty() || taus[0] == 0 || taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RateError::invalid("lags must be positive and strictly ascending"));
    }
    if n.saturating_mul(c) > MAX_BLOCK {
        return Err(RateError::Resource(format!(
            "propagating {n} x {c} entries exceeds the {MAX_BLOCK} limit"
        )));
    }
    let rho = stationary_distribution(q)?;
    let mut mass = vec![0.0; c];
    for (j, r) in rho.iter().enumerate() {
        mass[map.cell(j)] += r;
    }
    if let Some(k) = mass.iter().position(|&m| !(m > 0.0)) {
        return Err(RateError::numerical(
            "coarse matrix",
            format!("cell {k} has zero stationary mass"),
        ));
    }
    let mut cur = vec![0.0; n * c];
    for j in 0..n {
        let k = map.cell(j);
        cur[j * c + k] = rho[j] / mass[k];
    }
    let qt = q.csr().transpose();
    let mut next = vec![0.0; n * c];
    let mut out = Vec::with_capacity(taus.len());
    let mut step = 0;
    for &tau in taus {
        while step < tau {
            next.par_chunks_mut(c).enumerate().for_each(|(j, dst)| {
                dst.iter_mut().for_each(|v| *v = 0.0);
                let (cols, vals) = qt.row_slices(j);
                for (&i, &v) in cols.iter().zip(vals) {
                    let src = &cur[i * c..(i + 1) * c];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += v * s);
                }
            });
            std::mem::swap(&mut cur, &mut next);
            step += 1;
            let mut col = vec![0.0; c];
            for row in cur.chunks(c) {
                col.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            let drift = col.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max);
            if drift > 1e-8 {
                return Err(RateError::numerical(
                    "coarse matrix",
                    format!("probability drift {drift:e} at step {step}"),
                ));
            }
            if drift > 1e-13 {
                for row in cur.chunks_mut(c) {
                    row.iter_mut().zip(&col).for_each(|(a, m)| *a /= m);
                }
            }
        }
        let mut p = DMatrix::zeros(c, c);
        for j in 0..n {
            let to = map.cell(j);
            for from in 0..c {
                p[(from, to)] += cur[j * c + from];
            }
        }
        out.push(CoarseMatrix {
            matrix: dense_to_transition(&p, tau)?,
            tau,
            source: Source::Analytic,
            counts: None,
            samples_per_row: None,
        });
    }
    Ok(out)
}

/// Exact coarse matrix at one lag: `P_IJ = sum_{k in I} rho_k / rho(I) sum_{l in J} (Q^tau)_kl`.
pub fn coarse_from_fine(q: &TransitionMatrix, map: &SiteMap, tau: usize) -> Result<CoarseMatrix> {
    Ok(coarse_series(q, map, &[tau])?.remove(0))
}

/// Draws one state of `cell` from the Boltzmann density restricted to the
/// cell, by rejection against the lowest energy bound over the cell.
pub(crate) struct CellSampler<'a, D: Dynamics> {
    dynamics: &'a D,
    sites: &'a [usize],
    floor: f64,
}

impl<'a, D: Dynamics> CellSampler<'a, D> {
    pub(crate) fn new(dynamics: &'a D, sites: &'a [usize], cell: usize) -> Result<Self> {
        let floor = sites
            .iter()
            .map(|&s| dynamics.site_energy_floor(s))
            .fold(f64::INFINITY, f64::min);
        if !(dynamics.beta() * floor < 690.0) {
            return Err(RateError::numerical(
                "cell sampling",
                format!("cell {cell} has negligible Boltzmann weight (all weights below 1e-300)"),
            ));
        }
        Ok(CellSampler { dynamics, sites, floor })
    }

    pub(crate) fn draw(&self, rng: &mut RngStream) -> Result<D::State> {
        let beta = self.dynamics.beta();
        for _ in 0..100_000_000u64 {
            let site = self.sites[rng.below(self.sites.len())];
            let s = self.dynamics.state_in_site(site, rng);
            let w = (-beta * (self.dynamics.energy(s) - self.floor)).exp();
            if rng.uniform() < w {
                return Ok(s);
            }
        }
        Err(RateError::numerical(
            "cell sampling",
            "rejection sampler accepted nothing in 1e8 proposals",
        ))
    }
}

/// Sampled coarse matrix: `n_per_row` trajectories of `tau` steps start from
/// the Boltzmann density inside each cell; entries are end-cell frequencies.
/// Rows run in parallel, each with its own stream derived from `seed`.
pub fn coarse_empirical<D: Dynamics>(
    dynamics: &D,
    map: &SiteMap,
    tau: usize,
    n_per_row: usize,
    seed: u64,
) -> Result<CoarseMatrix> {
    let c = map.n_cells();
    if map.n_sites() != dynamics.lattice().len() {
        return Err(RateError::invalid("partition does not match the dynamics lattice"));
    }
    if n_per_row == 0 {
        return Err(RateError::invalid("need at least one sample per row"));
    }
    let rows: Vec<Vec<u64>> = (0..c)
        .into_par_iter()
        .map(|cell| -> Result<Vec<u64>> {
            let mut counts = vec![0u64; c];
            if tau == 0 {
                counts[cell] = n_per_row as u64;
                return Ok(counts);
            }
            let sampler = CellSampler::new(dynamics, map.members(cell), cell)?;
            let mut rng = RngStream::derive(seed, &[tau as u64, cell as u64]);
            for _ in 0..n_per_row {
                let mut s = sampler.draw(&mut rng)?;
                for _ in 0..tau {
                    s = dynamics.step(s, &mut rng)?;
                }
                counts[map.cell(dynamics.site_of(s))] += 1;
            }
            Ok(counts)
        })
        .collect::<Result<_>>()?;
    let total = n_per_row as f64;
    let p = DMatrix::from_fn(c, c, |i, j| rows[i][j] as f64 / total);
    Ok(CoarseMatrix {
        matrix: TransitionMatrix::normalized(CsrMatrix::from_dense(&p), Some(cell_labels(c)), tau)?,
        tau,
        source: Source::Empirical,
        counts: Some(rows),
        samples_per_row: Some(n_per_row as u64),
    })
}

/// Multinomial resample of a matrix: each row replaced by the frequencies of
/// `n` draws from it.
pub fn resample_rows(p: &TransitionMatrix, n: usize, rng: &mut RngStream) -> Result<TransitionMatrix> {
    let m = p.dim();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        let (cols, vals) = p.csr().row_slices(i);
        let mut cdf = Vec::with_capacity(vals.len());
        let mut acc = 0.0;
        for v in vals {
            acc += v;
            cdf.push(acc);
        }
        for _ in 0..n {
            let u = rng.uniform() * acc;
            let k = cdf.partition_point(|&c| c <= u).min(cols.len() - 1);
            out[(i, cols[k])] += 1.0;
        }
    }
    out /= n as f64;
    TransitionMatrix::normalized(CsrMatrix::from_dense(&out), Some(p.labels().to_vec()), p.lag())
}

/// Block-constant fine matrix `P^c_kl = P_IJ / |V_J|` for `k in I`, `l in J`.
pub fn lift(p: &TransitionMatrix, map: &SiteMap) -> Result<TransitionMatrix> {
    if p.dim() != map.n_cells() {
        return Err(RateError::invalid(
            "coarse matrix and partition disagree on the number of cells",
        ));
    }
    let n = map.n_sites();
    let rows = (0..n)
        .map(|k| {
            let from = map.cell(k);
            p.csr()
                .row(from)
                .flat_map(|(to, v)| {
                    let members = map.members(to);
                    let share = v / members.len() as f64;
                    members.iter().map(move |&l| (l, share))
                })
                .collect()
        })
        .collect();
    TransitionMatrix::new(CsrMatrix::from_rows(n, rows)?, None, p.lag())
}

/// Lumping with in-cell weights `w`: `P_IJ = sum_{k in I} w_k / w(I) sum_{l in J} F_kl`.
pub fn lump(fine: &TransitionMatrix, map: &SiteMap, weights: &[f64]) -> Result<TransitionMatrix> {
    let c = map.n_cells();
    if fine.dim() != map.n_sites() || weights.len() != fine.dim() {
        return Err(RateError::invalid(
            "fine matrix, partition and weights must agree in size",
        ));
    }
    let mut out = DMatrix::zeros(c, c);
    for from in 0..c {
        let members = map.members(from);
        let total: f64 = members.iter().map(|&k| weights[k]).sum();
        if !(total > 0.0) {
            return Err(RateError::invalid(format!("cell {from} has zero total weight")));
        }
        for &k in members {
            let w = weights[k] / total;
            for (l, v) in fine.csr().row(k) {
                out[(from, map.cell(l))] += w * v;
            }
        }
    }
    dense_to_transition(&out, fine.lag())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ChainDynamics;

    fn four_state() -> TransitionMatrix {
        TransitionMatrix::from_dense(
            &DMatrix::from_row_slice(
                4,
                4,
                &[
                    0.5, 0.3, 0.2, 0.0, 0.2, 0.6, 0.1, 0.1, 0.0, 0.1, 0.7, 0.2, 0.1, 0.0, 0.3, 0.6,
                ],
            ),
            1,
        )
        .unwrap()
    }

    #[test]
    fn single_cell_gives_unit_matrix() {
        let q = four_state();
        let p = coarse_from_fine(&q, &SiteMap::new(vec![0; 4], 1).unwrap(), 3).unwrap();
        assert_eq!(p.dim(), 1);
        assert!((p.matrix.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_partition_gives_matrix_powers() {
        let q = four_state();
        let d = q.to_dense();
        let series = coarse_series(&q, &SiteMap::identity(4), &[1, 2, 7]).unwrap();
        let mut power = DMatrix::identity(4, 4);
        let mut k = 0;
        for p in &series {
            while k < p.tau {
                power = &power * &d;
                k += 1;
            }
            assert!((p.matrix.to_dense() - &power).amax() < 1e-15, "tau {}", p.tau);
        }
    }

    #[test]
    fn two_by_two_lumping_matches_enumeration() {
        let q = four_state();
        let rho = stationary_distribution(&q).unwrap();
        let map = SiteMap::new(vec![0, 0, 1, 1], 2).unwrap();
        let p = coarse_from_fine(&q, &map, 1).unwrap();
        let d = q.to_dense();
        for (a, cell_a) in [[0usize, 1], [2, 3]].iter().enumerate() {
            let w: f64 = cell_a.iter().map(|&k| rho[k]).sum();
            for (b, cell_b) in [[0usize, 1], [2, 3]].iter().enumerate() {
                let mut s = 0.0;
                for &k in cell_a {
                    for &l in cell_b {
                        s += rho[k] / w * d[(k, l)];
                    }
                }
                assert!((p.matrix.get(a, b) - s).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lift_examples() {
        let one = TransitionMatrix::from_dense(&DMatrix::from_element(1, 1, 1.0), 1).unwrap();
        let l = lift(&one, &SiteMap::new(vec![0; 3], 1).unwrap()).unwrap();
        assert!(l.to_dense().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-16));

        let p = TransitionMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]), 1).unwrap();
        let map = SiteMap::new(vec![0, 0, 1, 1], 2).unwrap();
        let l = lift(&p, &map).unwrap().to_dense();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.45, 0.45, 0.05, 0.05, 0.45, 0.45, 0.05, 0.05, 0.1, 0.1, 0.4, 0.4, 0.1, 0.1, 0.4, 0.4,
            ],
        );
        assert!((l - expect).amax() < 1e-15);
        let back = lump(&lift(&p, &map).unwrap(), &map, &[1.0; 4]).unwrap();
        assert!((back.to_dense() - p.to_dense()).amax() < 1e-14);
    }

    #[test]
    fn empirical_tau_zero_is_identity() {
        let q = four_state();
        let dynm = ChainDynamics::new(q, None, 1.0).unwrap();
        let p = coarse_empirical(&dynm, &SiteMap::new(vec![0, 0, 1, 1], 2).unwrap(), 0, 10, 1).unwrap();
        assert_eq!(p.matrix.to_dense(), DMatrix::identity(2, 2));
        assert_eq!(p.counts.as_ref().unwrap()[1], vec![0, 10]);
    }

    #[test]
    fn deterministic_chain_gives_unit_rows() {
        let perm = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let q = TransitionMatrix::from_dense(&perm, 1).unwrap();
        let dynm = ChainDynamics::new(q, Some(vec![0.0; 3]), 1.0).unwrap();
        let p = coarse_empirical(&dynm, &SiteMap::identity(3), 2, 50, 9).unwrap();
        let d = p.matrix.to_dense();
        for i in 0..3 {
            assert_eq!(d[(i, (i + 2) % 3)], 1.0);
        }
    }

    #[test]
    fn empirical_rows_are_reproducible() {
        let q = four_state();
        let dynm = ChainDynamics::new(q, None, 1.0).unwrap();
        let map = SiteMap::new(vec![0, 1, 1, 0], 2).unwrap();
        let a = coarse_empirical(&dynm, &map, 3, 500, 42).unwrap();
        let b = coarse_empirical(&dynm, &map, 3, 500, 42).unwrap();
        assert_eq!(a, b);
    }
}
