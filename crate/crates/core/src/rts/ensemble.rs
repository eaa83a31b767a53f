//! Colored weighted walkers and one step of reactive trajectory sampling.

use super::resample::resample_plan;
use crate::dynamics::Dynamics;
use crate::error::{RateError, Result};
use crate::msm::SiteMap;
use crate::rng::RngStream;
use crate::spectral::BasinSpec;
use crate::stats::NeumaierSum;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct Walker<S> {
    pub state: S,
    pub weight: f64,
    /// Index of the tagged basin visited last.
    pub color: usize,
    pub rng: RngStream,
}

/// Tagged basins; a walker entering basin `k` takes color `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorSpec {
    basin_of_site: Vec<Option<usize>>,
    basins: Vec<Vec<usize>>,
}

impl ColorSpec {
    /// `basins[k]` lists the lattice sites of basin `k`; basins must be disjoint.
    pub fn new(n_sites: usize, basins: Vec<Vec<usize>>) -> Result<Self> {
        if basins.is_empty() {
            return Err(RateError::invalid("at least one color is required"));
        }
        let mut basin_of_site = vec![None; n_sites];
        for (k, sites) in basins.iter().enumerate() {
            for &s in sites {
                if s >= n_sites {
                    return Err(RateError::invalid(format!("basin {k} site {s} outside the lattice")));
                }
                if let Some(other) = basin_of_site[s] {
                    return Err(RateError::invalid(format!(
                        "site {s} belongs to basins {other} and {k}"
                    )));
                }
                basin_of_site[s] = Some(k);
            }
        }
        Ok(ColorSpec { basin_of_site, basins })
    }

    /// Two colors: 0 for walkers last in A, 1 for walkers last in B.
    pub fn two_basin(basins: &BasinSpec) -> Result<Self> {
        Self::new(basins.len(), vec![basins.a().to_vec(), basins.b().to_vec()])
    }

    pub fn n_colors(&self) -> usize {
        self.basins.len()
    }

    pub fn basin_at(&self, site: usize) -> Option<usize> {
        self.basin_of_site[site]
    }

    pub fn basin(&self, k: usize) -> &[usize] {
        &self.basins[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RtsParams {
    /// Walkers kept in every non-empty (cell, color) group.
    pub target: usize,
    /// A group larger than this before resampling is a resource error.
    pub hard_cap: usize,
    pub seed: u64,
}

impl RtsParams {
    pub fn new(target: usize, seed: u64) -> Self {
        RtsParams {
            target,
            hard_cap: 1000 * target.max(1),
            seed,
        }
    }
}

/// Color transfers during one step.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxRecord {
    pub step: u64,
    /// Total weight of each color before the step.
    pub color_mass: Vec<f64>,
    /// `transfers[c][d]`: weight that changed from color `c` to `d`.
    pub transfers: Vec<Vec<f64>>,
}

impl FluxRecord {
    /// `J = transferred / (mass dt)`; zero when the source color is empty.
    pub fn flux(&self, from: usize, to: usize, dt: f64) -> f64 {
        let m = self.color_mass[from];
        if m > 0.0 {
            self.transfers[from][to] / (m * dt)
        } else {
            0.0
        }
    }
}

/// Flux log as CSV: one line per step and ordered color pair.
pub fn write_flux_csv<W: Write>(records: &[FluxRecord], mut w: W) -> Result<()> {
    writeln!(w, "step,pair,transferred_weight,color_mass")?;
    for r in records {
        let k = r.color_mass.len();
        for c in 0..k {
            for d in 0..k {
                if c != d {
                    writeln!(w, "{},{c}->{d},{:e},{:e}", r.step, r.transfers[c][d], r.color_mass[c])?;
                }
            }
        }
    }
    Ok(())
}

/// Weight moved between (cell, color) groups and weight-time spent in each,
/// for estimating steady-state group weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFlux {
    n_colors: usize,
    /// Dense `g x g` matrix in row-major order, `g = cells * colors`.
    pub counts: Vec<f64>,
    pub time: Vec<f64>,
}

impl GroupFlux {
    pub fn new(n_cells: usize, n_colors: usize) -> Self {
        let g = n_cells * n_colors;
        GroupFlux {
            n_colors,
            counts: vec![0.0; g * g],
            time: vec![0.0; g],
        }
    }

    pub fn n_groups(&self) -> usize {
        self.time.len()
    }

    pub fn group(&self, cell: usize, color: usize) -> usize {
        cell * self.n_colors + color
    }

    pub fn count(&self, from: usize, to: usize) -> f64 {
        self.counts[from * self.n_groups() + to]
    }
}

/// Walkers plus the bookkeeping needed to advance and resample them.
#[derive(Debug, Clone)]
pub struct Ensemble<S> {
    pub walkers: Vec<Walker<S>>,
    map: SiteMap,
    colors: ColorSpec,
    params: RtsParams,
    step: u64,
    initial_mass: f64,
}

/// Stream tag separating resampling draws from other uses of the seed.
const RESAMPLE_TAG: u64 = 0x5245_5341;
const INIT_TAG: u64 = 0x494E_4954;
/// Smallest weight a resampled walker may carry.
pub const WEIGHT_FLOOR: f64 = 1e-300;

fn total_mass<S>(walkers: &[Walker<S>]) -> f64 {
    let mut s = NeumaierSum::new();
    walkers.iter().for_each(|w| s.add(w.weight));
    s.value()
}

impl<S: Copy + Send + Sync> Ensemble<S> {
    /// Ensemble from given walkers, resampled once so every group starts at
    /// the target count with equal weights.
    pub fn from_walkers<D: Dynamics<State = S>>(
        dynamics: &D,
        walkers: Vec<Walker<S>>,
        map: SiteMap,
        colors: ColorSpec,
        params: RtsParams,
    ) -> Result<Self> {
        if params.target == 0 {
            return Err(RateError::invalid("target walkers per group must be at least 1"));
        }
        if map.n_sites() != dynamics.lattice().len() || colors.basin_of_site.len() != map.n_sites() {
            return Err(RateError::invalid("partition, colors and dynamics lattice disagree"));
        }
        if let Some(w) = walkers
            .iter()
            .find(|w| !(w.weight > 0.0) || w.color >= colors.n_colors())
        {
            return Err(RateError::invalid(format!(
                "walker with weight {} and color {} is invalid",
                w.weight, w.color
            )));
        }
        let initial_mass = total_mass(&walkers);
        let mut ens = Ensemble {
            walkers,
            map,
            colors,
            params,
            step: 0,
            initial_mass,
        };
        ens.resample(dynamics, INIT_TAG)?;
        Ok(ens)
    }

    /// Walkers of color `k` start uniformly over the sites of basin `k`,
    /// `target` per cell the basin touches, with weights proportional to
    /// `exp(-beta U)` normalized so color `k` carries `masses[k]`.
    pub fn initialize<D: Dynamics<State = S>>(
        dynamics: &D,
        map: SiteMap,
        colors: ColorSpec,
        params: RtsParams,
        masses: &[f64],
    ) -> Result<Self> {
        let k = colors.n_colors();
        if masses.len() != k || masses.iter().any(|m| !(*m > 0.0)) {
            return Err(RateError::invalid("need one positive initial mass per color"));
        }
        let beta = dynamics.beta();
        let mut walkers = Vec::new();
        for c in 0..k {
            let mut by_cell: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for &s in colors.basin(c) {
                by_cell.entry(map.cell(s)).or_default().push(s);
            }
            if by_cell.is_empty() {
                return Err(RateError::invalid(format!("basin {c} is empty")));
            }
            let mut rng = RngStream::derive(params.seed, &[INIT_TAG, c as u64]);
            let mut group = Vec::new();
            for sites in by_cell.values() {
                for _ in 0..params.target {
                    let site = sites[rng.below(sites.len())];
                    let state = dynamics.state_in_site(site, &mut rng);
                    group.push((state, dynamics.energy(state)));
                }
            }
            let emin = group.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);
            let raw: Vec<f64> = group.iter().map(|g| (-beta * (g.1 - emin)).exp()).collect();
            let sum: f64 = raw.iter().sum();
            for ((state, _), r) in group.into_iter().zip(raw) {
                walkers.push(Walker {
                    state,
                    weight: masses[c] * r / sum,
                    color: c,
                    rng: rng.split(),
                });
            }
        }
        Self::from_walkers(dynamics, walkers, map, colors, params)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn params(&self) -> &RtsParams {
        &self.params
    }

    pub fn partition(&self) -> &SiteMap {
        &self.map
    }

    pub fn colors(&self) -> &ColorSpec {
        &self.colors
    }

    pub fn color_mass(&self) -> Vec<f64> {
        let mut sums = vec![NeumaierSum::new(); self.colors.n_colors()];
        for w in &self.walkers {
            sums[w.color].add(w.weight);
        }
        sums.iter().map(|s| s.value()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        total_mass(&self.walkers)
    }

    /// Change of the total weight since construction.
    pub fn mass_drift(&self) -> f64 {
        self.total_mass() - self.initial_mass
    }

    /// `sum_i w_i f(x_i) / sum_i w_i`.
    pub fn weighted_mean(&self, f: impl Fn(&S) -> f64) -> f64 {
        let mut num = NeumaierSum::new();
        for w in &self.walkers {
            num.add(w.weight * f(&w.state));
        }
        num.value() / self.total_mass()
    }

    fn cell_of<D: Dynamics<State = S>>(&self, dynamics: &D, s: S) -> usize {
        self.map.cell(dynamics.site_of(s))
    }

    /// Resample every (cell, color) group to the target count. Groups are
    /// visited in key order, each with a stream derived from the seed, the
    /// step and its key, so the result does not depend on thread count.
    fn resample<D: Dynamics<State = S>>(&mut self, dynamics: &D, tag: u64) -> Result<()> {
        let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (i, w) in self.walkers.iter().enumerate() {
            groups
                .entry((self.cell_of(dynamics, w.state), w.color))
                .or_default()
                .push(i);
        }
        if let Some(((cell, color), g)) = groups.iter().find(|(_, g)| g.len() > self.params.hard_cap) {
            return Err(RateError::Resource(format!(
                "group (cell {cell}, color {color}) holds {} walkers, above the cap of {}",
                g.len(),
                self.params.hard_cap
            )));
        }
        let target = self.params.target;
        let seed = self.params.seed;
        let step = self.step;
        let walkers = &self.walkers;
        let groups: Vec<((usize, usize), Vec<usize>)> = groups.into_iter().collect();
        let parts: Vec<Vec<Walker<S>>> = groups
            .par_iter()
            .map(|((cell, color), idx)| -> Result<Vec<Walker<S>>> {
                let mut rng = RngStream::derive(seed, &[tag, step, *cell as u64, *color as u64]);
                let weights: Vec<f64> = idx.iter().map(|&i| walkers[i].weight).collect();
                // Below the floor the group collapses rather than splitting into denormals.
                let total: f64 = weights.iter().sum();
                let target = if total / (target as f64) < WEIGHT_FLOOR {
                    ((total / WEIGHT_FLOOR) as usize).clamp(1, target)
                } else {
                    target
                };
                let plan = resample_plan(&weights, target, &mut rng)?;
                let mut used = vec![false; idx.len()];
                Ok(plan
                    .picks
                    .iter()
                    .map(|&p| {
                        let src = &walkers[idx[p]];
                        let stream = if used[p] { rng.split() } else { src.rng.clone() };
                        used[p] = true;
                        Walker {
                            state: src.state,
                            weight: plan.weight,
                            color: src.color,
                            rng: stream,
                        }
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        self.walkers = parts.into_iter().flatten().collect();
        Ok(())
    }

    /// Advance every walker one step, recolor walkers that entered a tagged
    /// basin, record the transferred weight, then resample.
    pub fn step<D: Dynamics<State = S>>(
        &mut self,
        dynamics: &D,
        group_flux: Option<&mut GroupFlux>,
    ) -> Result<FluxRecord> {
        let k = self.colors.n_colors();
        let color_mass = self.color_mass();
        let before: Option<Vec<usize>> = group_flux.as_ref().map(|gf| {
            self.walkers
                .iter()
                .map(|w| gf.group(self.cell_of(dynamics, w.state), w.color))
                .collect()
        });
        self.walkers.par_iter_mut().try_for_each(|w| -> Result<()> {
            w.state = dynamics.step(w.state, &mut w.rng)?;
            Ok(())
        })?;
        let mut transfers = vec![vec![0.0; k]; k];
        for w in self.walkers.iter_mut() {
            if let Some(b) = self.colors.basin_at(dynamics.site_of(w.state)) {
                if b != w.color {
                    transfers[w.color][b] += w.weight;
                    w.color = b;
                }
            }
        }
        if let (Some(gf), Some(before)) = (group_flux, before) {
            let g = gf.n_groups();
            let dt = dynamics.dt();
            for (w, &from) in self.walkers.iter().zip(&before) {
                let to = gf.group(self.cell_of(dynamics, w.state), w.color);
                gf.time[from] += w.weight * dt;
                if to != from {
                    gf.counts[from * g + to] += w.weight;
                }
            }
        }
        let record = FluxRecord {
            step: self.step,
            color_mass,
            transfers,
        };
        self.resample(dynamics, RESAMPLE_TAG)?;
        self.step += 1;
        Ok(record)
    }

    /// Rescale walkers so group `g` carries `weights[g]` of the current total
    /// mass. Groups without walkers cannot hold mass; the remaining targets
    /// are renormalized over the occupied groups.
    pub fn reweight<D: Dynamics<State = S>>(&mut self, dynamics: &D, weights: &[f64]) -> Result<()> {
        let k = self.colors.n_colors();
        if weights.len() != self.map.n_cells() * k {
            return Err(RateError::invalid("one weight per (cell, color) group is required"));
        }
        let total = self.total_mass();
        let groups: Vec<usize> = self
            .walkers
            .iter()
            .map(|w| self.cell_of(dynamics, w.state) * k + w.color)
            .collect();
        let mut current = vec![0.0; weights.len()];
        for (w, &g) in self.walkers.iter().zip(&groups) {
            current[g] += w.weight;
        }
        let occupied: f64 = (0..weights.len())
            .filter(|&g| current[g] > 0.0)
            .map(|g| weights[g])
            .sum();
        if !(occupied > 0.0) {
            return Err(RateError::numerical(
                "reweight",
                "no occupied group has positive target weight",
            ));
        }
        if occupied < weights.iter().sum::<f64>() * (1.0 - 1e-12) {
            log::warn!("reweight: some groups with target weight hold no walkers");
        }
        for (w, &g) in self.walkers.iter_mut().zip(&groups) {
            w.weight *= total * weights[g] / occupied / current[g];
        }
        let bad = self.walkers.iter().any(|w| !(w.weight > 0.0));
        if bad {
            return Err(RateError::numerical(
                "reweight",
                "a target weight of zero would remove walkers",
            ));
        }
        self.initial_mass = self.total_mass();
        Ok(())
    }

    pub(crate) fn raw_parts(&self) -> (&SiteMap, &ColorSpec, RtsParams, u64, f64) {
        (&self.map, &self.colors, self.params, self.step, self.initial_mass)
    }

    pub(crate) fn from_raw_parts(
        walkers: Vec<Walker<S>>,
        map: SiteMap,
        colors: ColorSpec,
        params: RtsParams,
        step: u64,
        initial_mass: f64,
    ) -> Self {
        Ensemble {
            walkers,
            map,
            colors,
            params,
            step,
            initial_mass,
        }
    }
}
