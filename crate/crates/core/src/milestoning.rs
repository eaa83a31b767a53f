//! Milestoning on the boundaries of a cell partition: cell-confined runs
//! record which milestone is crossed after which, the counts are assembled
//! into a milestone-to-milestone transition matrix, and mean passage times
//! to an absorbing milestone follow from a linear solve.

use crate::dynamics::Dynamics;
use crate::error::{RateError, Result};
use crate::geometry::Lattice;
use crate::linalg::CsrMatrix;
use crate::msm::coarse::CellSampler;
use crate::msm::SiteMap;
use crate::rng::RngStream;
use crate::transition::TransitionMatrix;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;

pub use crate::spectral::mean_passage_time;

const CELL_TAG: u64 = 0x4D49_4C45;

/// Interfaces between adjacent cells, one per unordered cell pair that
/// shares a lattice edge.
#[derive(Debug, Clone)]
pub struct MilestoneSet {
    map: SiteMap,
    pairs: Vec<(usize, usize)>,
    index: BTreeMap<(usize, usize), usize>,
    by_cell: Vec<Vec<usize>>,
    cemetery: usize,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl MilestoneSet {
    fn build(lattice: &Lattice, map: SiteMap) -> Result<Self> {
        if map.n_sites() != lattice.len() {
            return Err(RateError::invalid("partition does not match the lattice"));
        }
        let mut index = BTreeMap::new();
        for s in 0..lattice.len() {
            for t in lattice.neighbors(s).into_iter().flatten() {
                let (a, b) = (map.cell(s), map.cell(t));
                if a != b {
                    index.insert(key(a, b), 0);
                }
            }
        }
        if index.is_empty() {
            return Err(RateError::invalid("a partition with one cell has no milestones"));
        }
        let pairs: Vec<(usize, usize)> = index.keys().copied().collect();
        let mut by_cell = vec![Vec::new(); map.n_cells()];
        for (i, &(a, b)) in pairs.iter().enumerate() {
            index.insert((a, b), i);
            by_cell[a].push(i);
            by_cell[b].push(i);
        }
        Ok(MilestoneSet {
            map,
            pairs,
            index,
            by_cell,
            cemetery: 0,
        })
    }

    /// Milestones of `map` on `lattice`; `cemetery` names the absorbing
    /// interface by its two cells.
    pub fn new(lattice: &Lattice, map: SiteMap, cemetery: (usize, usize)) -> Result<Self> {
        let mut set = Self::build(lattice, map)?;
        set.cemetery = set.milestone(cemetery.0, cemetery.1).ok_or_else(|| {
            RateError::invalid(format!(
                "cells {} and {} are not adjacent, so they share no milestone",
                cemetery.0, cemetery.1
            ))
        })?;
        Ok(set)
    }

    /// Milestones with the cemetery set to the only interface of `cell`,
    /// typically the cell holding the product basin.
    pub fn around_cell(lattice: &Lattice, map: SiteMap, cell: usize) -> Result<Self> {
        let mut set = Self::build(lattice, map)?;
        match set.by_cell.get(cell).map(Vec::as_slice) {
            Some([m]) => set.cemetery = *m,
            Some(ms) => {
                return Err(RateError::invalid(format!(
                    "cell {cell} borders {} milestones; the cemetery must be its only interface",
                    ms.len()
                )))
            }
            None => return Err(RateError::invalid(format!("no cell {cell}"))),
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn partition(&self) -> &SiteMap {
        &self.map
    }

    /// The two cells bordering milestone `i`, smaller index first.
    pub fn cells_of(&self, i: usize) -> (usize, usize) {
        self.pairs[i]
    }

    pub fn milestone(&self, a: usize, b: usize) -> Option<usize> {
        self.index.get(&key(a, b)).copied()
    }

    /// Milestones bordering `cell`.
    pub fn of_cell(&self, cell: usize) -> &[usize] {
        &self.by_cell[cell]
    }

    pub fn cemetery(&self) -> usize {
        self.cemetery
    }

    pub fn cemetery_flags(&self) -> Vec<bool> {
        (0..self.len()).map(|i| i == self.cemetery).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.pairs.iter().map(|(a, b)| format!("S{a}-{b}")).collect()
    }
}

/// A change of cell between consecutive trajectory frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crossing {
    /// Index of the frame after the crossing.
    pub step: usize,
    pub from: usize,
    pub to: usize,
    /// `None` when the two cells are not adjacent and the jump skipped cells.
    pub milestone: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CrossingLog {
    pub events: Vec<Crossing>,
    /// Events whose cells are not adjacent.
    pub skipped: usize,
}

/// Cell changes along a trajectory given as lattice sites. A jump across
/// several cells is a single event labeled by its end cells.
pub fn detect_crossings(set: &MilestoneSet, sites: &[usize]) -> CrossingLog {
    let mut log = CrossingLog::default();
    for (k, w) in sites.windows(2).enumerate() {
        let (a, b) = (set.map.cell(w[0]), set.map.cell(w[1]));
        if a != b {
            let milestone = set.milestone(a, b);
            if milestone.is_none() {
                log.skipped += 1;
            }
            log.events.push(Crossing {
                step: k + 1,
                from: a,
                to: b,
                milestone,
            });
        }
    }
    log
}

/// Counts from one cell-confined run.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub cell: usize,
    /// Milestones of the cell; the matrices below use this order.
    pub milestones: Vec<usize>,
    /// `crossings[i][j]`: attempted crossings of milestone `j` while the last
    /// milestone was `i`.
    pub crossings: Vec<Vec<u64>>,
    /// Steps spent with each last milestone.
    pub label_steps: Vec<u64>,
    /// Steps with a defined last milestone; earlier steps are burn-in.
    pub steps: u64,
    /// Steps before the first crossing attempt, not counted in `steps`.
    pub unlabeled: u64,
    /// Moves that left the cell and could not be mirrored back.
    pub fallbacks: u64,
    /// Visits per member site, in the partition's member order.
    pub occupancy: Vec<u64>,
}

impl CellStats {
    fn local(&self, milestone: usize) -> Option<usize> {
        self.milestones.iter().position(|&m| m == milestone)
    }

    /// `N_ij` in global milestone indices.
    pub fn crossings_between(&self, i: usize, j: usize) -> u64 {
        match (self.local(i), self.local(j)) {
            (Some(a), Some(b)) => self.crossings[a][b],
            _ => 0,
        }
    }

    /// `N_i` for this cell in global milestone indices.
    pub fn steps_with_label(&self, i: usize) -> u64 {
        self.local(i).map_or(0, |a| self.label_steps[a])
    }

    fn merge(&mut self, other: &CellStats) {
        for (r, o) in self.crossings.iter_mut().zip(&other.crossings) {
            r.iter_mut().zip(o).for_each(|(x, y)| *x += y);
        }
        self.label_steps
            .iter_mut()
            .zip(&other.label_steps)
            .for_each(|(x, y)| *x += y);
        self.occupancy
            .iter_mut()
            .zip(&other.occupancy)
            .for_each(|(x, y)| *x += y);
        self.steps += other.steps;
        self.unlabeled += other.unlabeled;
        self.fallbacks += other.fallbacks;
    }
}

/// Run the dynamics confined to `cell` for `burn_in + steps` steps, starting
/// from the Boltzmann density in the cell. Moves that would leave the cell
/// count as crossings of the interface they reach first and are mirrored or
/// rejected by the dynamics. A cell with a single milestone starts labeled
/// by it, since every trajectory in the cell entered through it.
pub fn cell_confined_run<D: Dynamics>(
    dynamics: &D,
    set: &MilestoneSet,
    cell: usize,
    burn_in: usize,
    steps: usize,
    rng: &mut RngStream,
) -> Result<CellStats> {
    if cell >= set.map.n_cells() {
        return Err(RateError::invalid(format!("no cell {cell}")));
    }
    if set.map.n_sites() != dynamics.lattice().len() {
        return Err(RateError::invalid(
            "milestone partition does not match the dynamics lattice",
        ));
    }
    let members = set.map.members(cell);
    let milestones = set.of_cell(cell).to_vec();
    let k = milestones.len();
    let mut stats = CellStats {
        cell,
        milestones,
        crossings: vec![vec![0; k]; k],
        label_steps: vec![0; k],
        steps: 0,
        unlabeled: 0,
        fallbacks: 0,
        occupancy: vec![0; members.len()],
    };
    let slot: BTreeMap<usize, usize> = members.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let cells = set.map.cells();
    let mut state = CellSampler::new(dynamics, members, cell)?.draw(rng)?;
    let mut label = if k == 1 { Some(0) } else { None };
    for n in 0..burn_in + steps {
        let counted = n >= burn_in;
        if counted {
            match label {
                Some(l) => {
                    stats.label_steps[l] += 1;
                    stats.steps += 1;
                }
                None => stats.unlabeled += 1,
            }
        }
        let mv = dynamics.confined_step(state, cells, cell, rng)?;
        state = mv.state;
        if let Some(next) = mv.crossed_into {
            let m = set.milestone(cell, next).ok_or_else(|| {
                RateError::numerical(
                    "confined run",
                    format!("move from cell {cell} reached cell {next}, which is not adjacent"),
                )
            })?;
            let j = stats.local(m).expect("milestone borders the cell");
            if counted {
                if let Some(l) = label.filter(|&l| l != j) {
                    stats.crossings[l][j] += 1;
                }
                if mv.fallback {
                    stats.fallbacks += 1;
                }
            }
            label = Some(j);
        }
        if counted {
            let site = dynamics.site_of(state);
            match slot.get(&site) {
                Some(&i) => stats.occupancy[i] += 1,
                None => {
                    return Err(RateError::numerical(
                        "confined run",
                        format!("walker left cell {cell} to site {site}"),
                    ))
                }
            }
        }
    }
    Ok(stats)
}

/// Counts for every cell, merged over `replicas` independent runs per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingStats {
    pub cells: Vec<CellStats>,
}

impl CrossingStats {
    /// CSV with one line per ordered milestone pair sharing a cell:
    /// `i,j,cell_a,cell_b,N_ij,N_i_a,N_i_b,n_a,n_b`, where `a` is the shared
    /// cell and `b` the other cell of `i`.
    pub fn write_csv<W: Write>(&self, set: &MilestoneSet, mut w: W) -> Result<()> {
        writeln!(w, "i,j,cell_a,cell_b,N_ij,N_i_a,N_i_b,n_a,n_b")?;
        for a in &self.cells {
            for &i in &a.milestones {
                let (c0, c1) = set.cells_of(i);
                let b = if c0 == a.cell { c1 } else { c0 };
                let sb = &self.cells[b];
                for &j in a.milestones.iter().filter(|&&j| j != i) {
                    writeln!(
                        w,
                        "{i},{j},{},{b},{},{},{},{},{}",
                        a.cell,
                        a.crossings_between(i, j),
                        a.steps_with_label(i),
                        sb.steps_with_label(i),
                        a.steps,
                        sb.steps
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Confined runs in every cell, in parallel. Each cell uses its own stream
/// derived from `seed`, so results do not depend on the thread count.
pub fn run_cells<D: Dynamics>(
    dynamics: &D,
    set: &MilestoneSet,
    burn_in: usize,
    steps: usize,
    seed: u64,
) -> Result<CrossingStats> {
    if steps == 0 {
        return Err(RateError::invalid("confined runs need at least one step"));
    }
    let cells = (0..set.map.n_cells())
        .into_par_iter()
        .map(|c| {
            let mut rng = RngStream::derive(seed, &[CELL_TAG, c as u64]);
            cell_confined_run(dynamics, set, c, burn_in, steps, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CrossingStats { cells })
}

/// Pool repeated runs of the same cells.
pub fn merge_stats(runs: &[CrossingStats]) -> Result<CrossingStats> {
    let mut it = runs.iter();
    let mut out = it.next().ok_or_else(|| RateError::invalid("nothing to merge"))?.clone();
    for r in it {
        if r.cells.len() != out.cells.len() {
            return Err(RateError::invalid("runs cover different partitions"));
        }
        for (a, b) in out.cells.iter_mut().zip(&r.cells) {
            a.merge(b);
        }
    }
    Ok(out)
}

/// Stationary weight of each cell.
pub fn cell_weights(rho: &[f64], map: &SiteMap) -> Result<Vec<f64>> {
    if rho.len() != map.n_sites() {
        return Err(RateError::invalid("stationary vector does not match the partition"));
    }
    let mut w = vec![0.0; map.n_cells()];
    for (s, r) in rho.iter().enumerate() {
        w[map.cell(s)] += r;
    }
    Ok(w)
}

#[derive(Debug, Clone)]
pub struct MilestoneMatrix {
    /// Per-step milestone transition matrix, lag 1.
    pub matrix: TransitionMatrix,
    /// Milestones without data; their rows are absorbing placeholders.
    pub excluded: Vec<usize>,
}

/// Per-step milestone transition probabilities
/// `P_ij = (rho_a N_ij / n_a) / (rho_a N_i^a / n_a + rho_b N_i^b / n_b)`,
/// where `a` is the cell shared by `i` and `j` and `b` the other cell of `i`,
/// completed with `P_ii = 1 - sum_j P_ij`.
pub fn milestone_matrix(stats: &CrossingStats, set: &MilestoneSet, cell_weights: &[f64]) -> Result<MilestoneMatrix> {
    let nc = set.map.n_cells();
    if stats.cells.len() != nc || cell_weights.len() != nc {
        return Err(RateError::invalid(
            "statistics, weights and partition disagree on the cell count",
        ));
    }
    if let Some(w) = cell_weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(RateError::invalid(format!(
            "cell weight {w} is not a non-negative number"
        )));
    }
    let m = set.len();
    // Equilibrium probability per step of being in cell c with last milestone i.
    let occupancy = |c: &CellStats, i: usize| -> f64 {
        if c.steps == 0 {
            0.0
        } else {
            cell_weights[c.cell] * c.steps_with_label(i) as f64 / c.steps as f64
        }
    };
    let mut rows = Vec::with_capacity(m);
    let mut excluded = Vec::new();
    for i in 0..m {
        let (a, b) = set.cells_of(i);
        let denom = occupancy(&stats.cells[a], i) + occupancy(&stats.cells[b], i);
        if !(denom > 0.0) {
            if i != set.cemetery {
                log::warn!("milestone {i} (cells {a}, {b}) was never the last milestone; row excluded");
                excluded.push(i);
            }
            rows.push(vec![(i, 1.0)]);
            continue;
        }
        let mut row = Vec::new();
        let mut out = 0.0;
        for c in [a, b] {
            let cs = &stats.cells[c];
            if cs.steps == 0 {
                continue;
            }
            for &j in cs.milestones.iter().filter(|&&j| j != i) {
                let n = cs.crossings_between(i, j);
                if n > 0 {
                    let v = cell_weights[c] * n as f64 / cs.steps as f64 / denom;
                    row.push((j, v));
                    out += v;
                }
            }
        }
        if out > 1.0 + 1e-12 {
            return Err(RateError::numerical(
                "milestone matrix",
                format!("row {i} crossing probabilities sum to {out}"),
            ));
        }
        row.push((i, (1.0 - out).max(0.0)));
        rows.push(row);
    }
    let p = CsrMatrix::from_rows(m, rows)?;
    Ok(MilestoneMatrix {
        matrix: TransitionMatrix::normalized(p, Some(set.labels()), 1)?,
        excluded,
    })
}

/// Mean time to reach the cemetery from each milestone.
pub fn milestone_passage_times(mm: &MilestoneMatrix, set: &MilestoneSet, dt: f64) -> Result<Vec<f64>> {
    mean_passage_time(&mm.matrix, &set.cemetery_flags(), dt)
}

/// Mean time from milestone `from` to the cemetery. Only milestones reachable
/// from `from` without passing the cemetery enter the solve, so milestones
/// beyond it need no data.
pub fn passage_time_from(mm: &MilestoneMatrix, set: &MilestoneSet, from: usize, dt: f64) -> Result<f64> {
    let m = set.len();
    if from >= m {
        return Err(RateError::invalid(format!("no milestone {from}")));
    }
    let csr = mm.matrix.csr();
    let mut seen = vec![false; m];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(i) = stack.pop() {
        if i == set.cemetery {
            continue;
        }
        for (j, v) in csr.row(i) {
            if v > 0.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    if !seen[set.cemetery] {
        return Err(RateError::numerical(
            "milestone passage time",
            format!(
                "the cemetery {} is unreachable from {}",
                set.labels()[set.cemetery],
                set.labels()[from]
            ),
        ));
    }
    let keep: Vec<usize> = (0..m).filter(|&i| seen[i]).collect();
    let pos: BTreeMap<usize, usize> = keep.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let rows = keep
        .iter()
        .map(|&i| {
            if i == set.cemetery {
                vec![(pos[&i], 1.0)]
            } else {
                csr.row(i)
                    .filter(|(_, v)| *v > 0.0)
                    .map(|(j, v)| (pos[&j], v))
                    .collect()
            }
        })
        .collect();
    let sub = TransitionMatrix::new(CsrMatrix::from_rows(keep.len(), rows)?, None, 1)?;
    let flags: Vec<bool> = keep.iter().map(|&i| i == set.cemetery).collect();
    Ok(mean_passage_time(&sub, &flags, dt)?[pos[&from]])
}

/// Exact mean time for the fine chain `q` to go from milestone `from` to the
/// far side of the cemetery, for 1D partitions whose cell indices increase
/// along the line. Trajectories start from the equilibrium flux of fine
/// transitions whose last crossed milestone is `from`, and end on the first
/// visit to a cell beyond the cemetery. This is the limit a long brute-force
/// first-passage simulation converges to.
pub fn reference_passage_time(
    q: &TransitionMatrix,
    lattice: &Lattice,
    set: &MilestoneSet,
    from: usize,
    dt: f64,
) -> Result<f64> {
    let map = &set.map;
    if lattice.dims() != 1 || q.dim() != map.n_sites() || lattice.len() != q.dim() {
        return Err(RateError::invalid(
            "reference passage times need a 1D chain matching the partition",
        ));
    }
    if map.cells().windows(2).any(|w| w[1] < w[0]) {
        return Err(RateError::invalid("cell indices must increase along the line"));
    }
    if from >= set.len() || from == set.cemetery {
        return Err(RateError::invalid(format!(
            "start milestone {from} must exist and differ from the cemetery"
        )));
    }
    let start = set.pairs[from];
    let (ca, cb) = set.pairs[set.cemetery];
    let upward = start.1 <= ca;
    let target: Vec<bool> = map
        .cells()
        .iter()
        .map(|&c| if upward { c >= cb } else { c <= ca })
        .collect();
    let mfpt = crate::spectral::mean_first_passage(q, &target)?;
    let rho = crate::spectral::stationary_distribution(q)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..q.dim() {
        let ck = map.cell(k);
        for (l, v) in q.csr().row(k) {
            let cl = map.cell(l);
            // The last interface crossed on a jump is the one bordering the landing cell.
            let last = match ck.cmp(&cl) {
                std::cmp::Ordering::Less => (cl - 1, cl),
                std::cmp::Ordering::Greater => (cl, cl + 1),
                std::cmp::Ordering::Equal => continue,
            };
            if last == start {
                num += rho[k] * v * mfpt[l];
                den += rho[k] * v;
            }
        }
    }
    if !(den > 0.0) {
        return Err(RateError::numerical(
            "reference passage time",
            "the chain never crosses the start milestone",
        ));
    }
    Ok(num / den * dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ChainDynamics;
    use nalgebra::DMatrix;

    fn line_set(cells: Vec<usize>, n_cells: usize, cemetery: (usize, usize)) -> MilestoneSet {
        let lat = Lattice::line(0.0, 1.0, cells.len()).unwrap();
        MilestoneSet::new(&lat, SiteMap::new(cells, n_cells).unwrap(), cemetery).unwrap()
    }

    #[test]
    fn milestones_of_stripes() {
        let set = line_set(vec![0, 0, 1, 1, 2, 2], 3, (1, 2));
        assert_eq!(set.len(), 2);
        assert_eq!(set.cells_of(0), (0, 1));
        assert_eq!(set.cemetery(), 1);
        assert_eq!(set.of_cell(1), &[0, 1]);
        assert!(MilestoneSet::new(&Lattice::line(0.0, 1.0, 6).unwrap(), set.partition().clone(), (0, 2)).is_err());
        let lat = Lattice::line(0.0, 1.0, 6).unwrap();
        let around = MilestoneSet::around_cell(&lat, set.partition().clone(), 2).unwrap();
        assert_eq!(around.cemetery(), 1);
        assert!(MilestoneSet::around_cell(&lat, set.partition().clone(), 1).is_err());
    }

    #[test]
    fn crossings_follow_cell_changes() {
        let set = line_set(vec![0, 0, 1, 1, 2, 2], 3, (1, 2));
        assert!(detect_crossings(&set, &[0, 1, 0, 1]).events.is_empty());
        let log = detect_crossings(&set, &[1, 2, 1]);
        let pairs: Vec<(usize, usize)> = log.events.iter().map(|e| (e.from, e.to)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
        let log = detect_crossings(&set, &[1, 2, 3, 1]);
        assert_eq!(log.events.len(), 2);
        let log = detect_crossings(&set, &[0, 5]);
        assert_eq!(log.skipped, 1);
        assert_eq!(log.events[0].milestone, None);
    }

    fn stats_two_cells(n_a: u64, n_b: u64) -> (MilestoneSet, CrossingStats) {
        // Cells 0 | 1 | 2; milestone 0 between 0 and 1, milestone 1 between 1 and 2.
        let set = line_set(vec![0, 1, 2], 3, (1, 2));
        let cell = |c: usize, ms: Vec<usize>, cr: Vec<Vec<u64>>, ls: Vec<u64>, steps: u64| CellStats {
            cell: c,
            milestones: ms,
            crossings: cr,
            label_steps: ls,
            steps,
            unlabeled: 0,
            fallbacks: 0,
            occupancy: vec![steps],
        };
        let stats = CrossingStats {
            cells: vec![
                cell(0, vec![0], vec![vec![0]], vec![n_a], n_a),
                cell(
                    1,
                    vec![0, 1],
                    vec![vec![0, 10], vec![30, 0]],
                    vec![n_b / 2, n_b / 2],
                    n_b,
                ),
                cell(2, vec![1], vec![vec![0]], vec![100], 100),
            ],
        };
        (set, stats)
    }

    #[test]
    fn equal_weights_reduce_to_counts() {
        let (set, stats) = stats_two_cells(1000, 1000);
        let mm = milestone_matrix(&stats, &set, &[1.0, 1.0, 1.0]).unwrap();
        // N_01 / (N_0^a + N_0^b) = 10 / (1000 + 500).
        assert!((mm.matrix.get(0, 1) - 10.0 / 1500.0).abs() < 1e-15);
        for i in 0..2 {
            let s: f64 = (0..2).map(|j| mm.matrix.get(i, j)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_length_enters_through_n() {
        // Cell 0 sampled twice as long with the same label fraction.
        let (set, stats) = stats_two_cells(2000, 1000);
        let mm = milestone_matrix(&stats, &set, &[1.0, 1.0, 1.0]).unwrap();
        let by_hand = (10.0 / 1000.0) / (2000.0 / 2000.0 + 500.0 / 1000.0);
        assert!((mm.matrix.get(0, 1) - by_hand).abs() < 1e-15);
    }

    #[test]
    fn unvisited_milestone_is_excluded() {
        let (set, mut stats) = stats_two_cells(1000, 1000);
        stats.cells[0].label_steps = vec![0];
        stats.cells[1].label_steps = vec![0, 1000];
        let mm = milestone_matrix(&stats, &set, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(mm.excluded, vec![0]);
        assert!(milestone_passage_times(&mm, &set, 1.0).is_err());
    }

    #[test]
    fn single_milestone_passage_time() {
        let p = 0.02;
        let dt = 0.5;
        let d = DMatrix::from_row_slice(2, 2, &[1.0 - p, p, 0.0, 1.0]);
        let q = TransitionMatrix::from_dense(&d, 1).unwrap();
        let t = mean_passage_time(&q, &[false, true], dt).unwrap();
        assert!((t[0] - dt / p).abs() < 1e-9);
        let f = DMatrix::from_row_slice(2, 2, &[0.0, p / dt, 0.0, 0.0]);
        let tm = crate::rts::multicolor_mfpt(&f, 1, dt).unwrap();
        assert_eq!(t, tm);
    }

    fn walk(n: usize) -> ChainDynamics {
        let e: Vec<f64> = (0..n).map(|i| 0.3 * ((i as f64) - 3.0).powi(2) / 4.0).collect();
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in [i.wrapping_sub(1), i + 1] {
                if j < n {
                    p[(i, j)] = 0.3 * f64::min(1.0, (-(e[j] - e[i])).exp());
                }
            }
            p[(i, i)] = 1.0 - p.row(i).sum();
        }
        ChainDynamics::new(TransitionMatrix::from_dense(&p, 1).unwrap(), Some(e), 1.0).unwrap()
    }

    #[test]
    fn reference_time_averages_both_landing_sites() {
        // One site per cell: crossing 0|1 lands on site 1 going up and on
        // site 0 going down, with equal equilibrium flux.
        let d = walk(6);
        let lat = Lattice::line(0.0, 1.0, 6).unwrap();
        let set = MilestoneSet::new(&lat, SiteMap::identity(6), (3, 4)).unwrap();
        let from = set.milestone(0, 1).unwrap();
        let t = reference_passage_time(d.matrix(), &lat, &set, from, 2.0).unwrap();
        let target: Vec<bool> = (0..6).map(|i| i >= 4).collect();
        let m = crate::spectral::mean_first_passage(d.matrix(), &target).unwrap();
        assert!((t - (m[0] + m[1])).abs() < 1e-9 * t, "{t} vs {}", m[0] + m[1]);
        assert!(reference_passage_time(d.matrix(), &lat, &set, set.cemetery(), 1.0).is_err());
    }

    #[test]
    fn interior_cell_sees_no_crossings() {
        // A single cell covering the whole chain never reaches a boundary.
        let d = walk(8);
        let set = line_set(vec![0, 0, 0, 0, 0, 0, 0, 1], 2, (0, 1));
        let mut rng = RngStream::new(1);
        let st = cell_confined_run(&d, &set, 0, 0, 2000, &mut rng).unwrap();
        assert_eq!(st.steps, 2000);
        assert!(st.crossings.iter().flatten().all(|&c| c == 0));
    }

    #[test]
    fn confined_histogram_is_boltzmann() {
        let d = walk(8);
        let set = line_set(vec![0, 0, 1, 1, 1, 1, 2, 2], 3, (1, 2));
        let mut rng = RngStream::new(9);
        let st = cell_confined_run(&d, &set, 1, 1000, 400_000, &mut rng).unwrap();
        let total = (st.steps + st.unlabeled) as f64;
        let w: Vec<f64> = [2, 3, 4, 5].iter().map(|&s| (-d.energy(s)).exp()).collect();
        let z: f64 = w.iter().sum();
        // Chi-square with 3 degrees of freedom, inflated for correlated samples.
        let chi: f64 = st
            .occupancy
            .iter()
            .zip(&w)
            .map(|(&o, wi)| {
                let e = total * wi / z;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        assert!(chi < 40.0, "chi2 {chi}, occupancy {:?}", st.occupancy);
        assert!(st.crossings[0][1] > 0 && st.crossings[1][0] > 0);
    }
}
