//! Builds the dynamics, basins and partition a configuration describes and
//! runs the requested experiment.

use crate::config::{Config, Kind, Model, MsmSource, PartitionKind, RegionConfig};
use crate::output::{num, opt, OutDir, Table};
use ratekit::milestoning::{
    cell_weights, merge_stats, milestone_matrix, passage_time_from, reference_passage_time, run_cells, MilestoneSet,
};
use ratekit::msm::{
    coarse_series, eigen_sensitivity, msm_rates, msm_statistical_error, optimal_cells, rate_vs_lagtime_empirical,
    SampleBudget, SiteMap,
};
use ratekit::rng::derive_seed;
use ratekit::rts::{self, equilibrate, flux_series, rate_from_flux, write_checkpoint, write_flux_csv};
use ratekit::spectral::{committor, exact_rates, stationary_distribution};
use ratekit::{
    BasinSpec, Benchmark, Brownian, BrownianParams, CellPartition, ChainDynamics, ColorSpec, Dynamics, Ensemble,
    GridWalker, GridWalkerParams, Lattice, Point, RateEstimate, RateSeries, Region, Result, RtsParams,
    TransitionMatrix,
};

/// Concrete dynamics behind a configuration.
pub enum DynModel {
    Continuous(Brownian<Benchmark>),
    Chain(ChainDynamics),
    Grid(GridWalker<Benchmark>),
}

macro_rules! with_dynamics {
    ($model:expr, $d:ident => $body:expr) => {
        match $model {
            DynModel::Continuous($d) => $body,
            DynModel::Chain($d) => $body,
            DynModel::Grid($d) => $body,
        }
    };
}

/// Everything an experiment needs: dynamics, its fine chain and basins.
pub struct Setup {
    pub model: DynModel,
    pub lattice: Lattice,
    pub q: TransitionMatrix,
    pub rho: Vec<f64>,
    pub basins: BasinSpec,
    /// Stationary masses of the reactant and product halves.
    pub mass: (f64, f64),
    pub dt: f64,
}

fn region(r: &RegionConfig) -> Region {
    match (r.lo, r.hi, r.center, r.radius) {
        (Some(lo), Some(hi), _, _) => Region::Interval { lo, hi },
        (_, _, Some(c), Some(radius)) => Region::Disc {
            center: Point::new(c[0], c[1]),
            radius,
        },
        _ => unreachable!("validated region"),
    }
}

impl Setup {
    pub fn build(cfg: &Config) -> Result<Self> {
        let d = &cfg.dynamics;
        let potential = Benchmark::from_name(&d.potential)?;
        let (model, lattice) = match d.model {
            Model::Brownian | Model::BrownianLattice => {
                let params = BrownianParams {
                    beta: d.beta,
                    diffusion: d.diffusion.unwrap_or(0.0),
                    dt: d.dt,
                    lo: d.lo,
                    hi: d.hi,
                };
                let b = Brownian::new(potential, params, d.dx)?;
                let lattice = b.lattice().clone();
                if d.model == Model::BrownianLattice {
                    (DynModel::Chain(b.lattice_chain()?), lattice)
                } else {
                    (DynModel::Continuous(b), lattice)
                }
            }
            Model::Metropolis => {
                let lattice = Lattice::inclusive(d.lo, d.hi, d.dx, cfg.dims())?;
                let params = GridWalkerParams {
                    beta: d.beta,
                    move_prob: d.move_prob,
                    dt: d.dt,
                };
                (
                    DynModel::Grid(GridWalker::new(potential, lattice.clone(), params)?),
                    lattice,
                )
            }
        };
        let q = with_dynamics!(&model, m => m.fine_matrix()?);
        let b = &cfg.basins;
        let basins = BasinSpec::from_regions(
            &lattice,
            &Region::Below { threshold: b.split },
            &region(&b.a),
            &region(&b.b),
        )?;
        let rho = stationary_distribution(&q)?;
        let mass = basins.split_mass(&rho);
        Ok(Setup {
            model,
            lattice,
            q,
            rho,
            basins,
            mass,
            dt: d.dt,
        })
    }

    pub fn partition(&self, cfg: &Config) -> Result<SiteMap> {
        let p = cfg.partition.as_ref().expect("validated configuration has a partition");
        let d = &cfg.dynamics;
        match p.kind {
            PartitionKind::Uniform => {
                CellPartition::uniform_1d(d.lo, d.hi, p.n_cells.unwrap_or(0))?.site_map(&self.lattice)
            }
            PartitionKind::Slanted => CellPartition::slanted_2d(
                [d.lo, d.lo],
                [d.hi, d.hi],
                p.n_cells.unwrap_or(0),
                p.theta.unwrap_or(0.0),
            )?
            .site_map(&self.lattice),
            PartitionKind::Committor => {
                let pi = committor(&self.q, &self.basins)?;
                optimal_cells(&self.lattice, &pi, p.epsilon.unwrap_or(0.0))?.site_map(&self.lattice)
            }
            PartitionKind::Fine => Ok(SiteMap::identity(self.lattice.len())),
        }
    }

    pub fn exact(&self) -> Result<RateEstimate> {
        exact_rates(&self.q, &self.basins, self.dt)
    }
}

/// One line of the method comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRate {
    pub method: String,
    pub rate: RateEstimate,
}

fn rate_row(method: &str, r: &RateEstimate) -> Vec<String> {
    vec![
        method.to_string(),
        num(r.forward),
        num(r.backward),
        opt(r.stderr_forward),
        opt(r.stderr_backward),
    ]
}

fn rates_table(rows: &[MethodRate]) -> Table {
    let mut t = Table::new(&["method", "rate_fwd", "rate_bwd", "stderr_fwd", "stderr_bwd"]);
    for r in rows {
        t.push(rate_row(&r.method, &r.rate));
    }
    t
}

fn exact_stage(setup: &Setup, out: &mut OutDir) -> Result<MethodRate> {
    let r = setup.exact()?;
    let mut t = Table::new(&["rate_fwd", "rate_bwd", "mass_abar", "mass_bbar", "n_states"]);
    t.push(vec![
        num(r.forward),
        num(r.backward),
        num(setup.mass.0),
        num(setup.mass.1),
        setup.q.dim().to_string(),
    ]);
    out.table("exact", &t)?;
    Ok(MethodRate {
        method: "exact".into(),
        rate: r,
    })
}

fn msm_stage(cfg: &Config, setup: &Setup, map: &SiteMap, out: &mut OutDir) -> Result<Vec<MethodRate>> {
    let m = cfg.msm.clone().unwrap_or_else(|| crate::config::MsmConfig {
        taus: ratekit::msm::DEFAULT_TAUS.to_vec(),
        source: MsmSource::Analytic,
        steps_per_row: None,
        error_budget: 1e5,
    });
    let mut found = Vec::new();
    if m.source != MsmSource::Empirical {
        let coarse = coarse_series(&setup.q, map, &m.taus)?;
        let mut series = RateSeries::new();
        let mut err = Table::new(&[
            "tau",
            "n",
            "mu2",
            "lambda2",
            "sigma_mu2",
            "rel_error_2sigma",
            "cost_factor",
            "time_factor",
            "lag_factor",
        ]);
        let mut sens = Table::new(&["tau", "i", "j", "dmu2_dpij"]);
        for p in &coarse {
            let rate = msm_rates(p, setup.mass, setup.dt)?;
            series.push(p.tau as f64, rate);
            let n = (m.error_budget / p.tau as f64).max(1.0);
            let e = msm_statistical_error(&p.matrix, n, setup.dt)?;
            err.push(vec![
                p.tau.to_string(),
                num(n),
                num(e.mu2),
                num(e.lambda2),
                num(e.sigma_mu2),
                num(2.0 * e.relative),
                num(e.decomposition.cost),
                num(e.decomposition.time_scale),
                num(e.decomposition.lag_factor),
            ]);
            let s = eigen_sensitivity(&p.matrix)?;
            for i in 0..p.dim() {
                for j in 0..p.dim() {
                    sens.push(vec![
                        p.tau.to_string(),
                        i.to_string(),
                        j.to_string(),
                        num(s.entries[(i, j)]),
                    ]);
                }
            }
        }
        out.series("msm_rates_analytic", &series)?;
        out.table("msm_statistical_error", &err)?;
        out.table("msm_sensitivity", &sens)?;
        if let Some(last) = series.last() {
            found.push(MethodRate {
                method: format!("msm_analytic_tau{}", last.tau),
                rate: last.rate,
            });
        }
    }
    if m.source != MsmSource::Analytic {
        let budget = SampleBudget::StepsPerRow(m.steps_per_row.unwrap_or(1));
        let seed = derive_seed(cfg.seed(), &[STAGE_MSM]);
        let series =
            with_dynamics!(&setup.model, d => rate_vs_lagtime_empirical(d, map, &m.taus, budget, seed, setup.mass)?);
        out.series("msm_rates_empirical", &series)?;
        if let Some(last) = series.last() {
            found.push(MethodRate {
                method: format!("msm_empirical_tau{}", last.tau),
                rate: last.rate,
            });
        }
    }
    Ok(found)
}

const STAGE_MSM: u64 = 1;
const STAGE_RTS: u64 = 2;
const STAGE_MILESTONING: u64 = 3;

fn rts_run<D: Dynamics>(cfg: &Config, setup: &Setup, d: &D, map: &SiteMap, out: &mut OutDir) -> Result<MethodRate> {
    let r = cfg.rts.as_ref().expect("validated configuration has [rts]");
    let colors = ColorSpec::two_basin(&setup.basins)?;
    let params = RtsParams::new(r.walkers_per_cell, derive_seed(cfg.seed(), &[STAGE_RTS]));
    let mut ens = Ensemble::initialize(d, map.clone(), colors, params, &r.initial_mass)?;
    for round in 0..r.equilibrate_rounds {
        log::info!("steady-state equilibration round {}", round + 1);
        equilibrate(d, &mut ens, r.equilibrate_steps)?;
    }
    let records = rts::run(d, &mut ens, r.steps)?;
    let est = rate_from_flux(&records, r.burn_in, setup.dt)?;
    let series = flux_series(&records, r.burn_in, setup.dt, r.series_points)?;
    out.series("rts_rates", &series)?;
    let mut t = Table::new(&[
        "steps",
        "burn_in",
        "walkers",
        "mass_drift",
        "mass_color0",
        "mass_color1",
    ]);
    let mass = ens.color_mass();
    t.push(vec![
        r.steps.to_string(),
        r.burn_in.to_string(),
        ens.walkers.len().to_string(),
        num(ens.mass_drift()),
        num(mass[0]),
        num(mass[1]),
    ]);
    out.table("rts_ensemble", &t)?;
    if r.flux_log {
        out.raw("rts_flux.csv", |w| write_flux_csv(&records, w))?;
    }
    if r.checkpoint {
        out.raw("rts_checkpoint.txt", |w| write_checkpoint(&ens, w))?;
    }
    Ok(MethodRate {
        method: "rts".into(),
        rate: est,
    })
}

fn milestoning_run<D: Dynamics>(
    cfg: &Config,
    setup: &Setup,
    d: &D,
    map: &SiteMap,
    out: &mut OutDir,
) -> Result<MethodRate> {
    let m = cfg
        .milestoning
        .as_ref()
        .expect("validated configuration has [milestoning]");
    let set = MilestoneSet::new(&setup.lattice, map.clone(), (m.cemetery[0], m.cemetery[1]))?;
    let start = set.milestone(m.start[0], m.start[1]).ok_or_else(|| {
        ratekit::RateError::InvalidInput(format!("cells {} and {} share no milestone", m.start[0], m.start[1]))
    })?;
    let weights = cell_weights(&setup.rho, map)?;
    let seed = derive_seed(cfg.seed(), &[STAGE_MILESTONING]);
    let mut runs = Vec::with_capacity(m.replicas);
    let mut times = Table::new(&["replica", "passage_time"]);
    let mut ts = Vec::with_capacity(m.replicas);
    for rep in 0..m.replicas {
        let stats = run_cells(d, &set, m.burn_in, m.steps_per_cell, derive_seed(seed, &[rep as u64]))?;
        let mm = milestone_matrix(&stats, &set, &weights)?;
        let t = passage_time_from(&mm, &set, start, setup.dt)?;
        times.push(vec![rep.to_string(), num(t)]);
        ts.push(t);
        runs.push(stats);
    }
    let pooled = merge_stats(&runs)?;
    let mm = milestone_matrix(&pooled, &set, &weights)?;
    let t_pooled = passage_time_from(&mm, &set, start, setup.dt)?;
    out.table("milestoning_replicas", &times)?;
    out.raw("milestoning_crossings.csv", |w| pooled.write_csv(&set, w))?;
    out.raw("milestoning_matrix.csv", |w| mm.matrix.write_csv(w))?;
    let n = ts.len() as f64;
    let mean = ts.iter().sum::<f64>() / n;
    let se = if ts.len() > 1 {
        (ts.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        f64::NAN
    };
    let reference = if setup.lattice.dims() == 1 {
        reference_passage_time(&setup.q, &setup.lattice, &set, start, setup.dt)?
    } else {
        f64::NAN
    };
    let mut t = Table::new(&[
        "start",
        "cemetery",
        "replicas",
        "passage_time_mean",
        "passage_time_se",
        "passage_time_pooled",
        "passage_time_reference",
        "ratio_to_reference",
    ]);
    let labels = set.labels();
    t.push(vec![
        labels[start].clone(),
        labels[set.cemetery()].clone(),
        m.replicas.to_string(),
        num(mean),
        num(se),
        num(t_pooled),
        num(reference),
        num(mean / reference),
    ]);
    out.table("milestoning_summary", &t)?;
    // The passage time across the barrier approximates the inverse forward rate.
    Ok(MethodRate {
        method: "milestoning".into(),
        rate: RateEstimate {
            forward: 1.0 / mean,
            backward: f64::NAN,
            stderr_forward: (se.is_finite()).then(|| se / (mean * mean)),
            stderr_backward: None,
        },
    })
}

/// Run `cfg` (already validated, seed resolved) and write every result into `out`.
pub fn run_experiment(cfg: &Config, out: &mut OutDir) -> Result<Vec<MethodRate>> {
    log::info!("building dynamics for {}", cfg.experiment.name);
    let setup = Setup::build(cfg)?;
    let kind = cfg.experiment.kind;
    let mut rates = Vec::new();
    if matches!(kind, Kind::Exact | Kind::CompareAll) {
        rates.push(exact_stage(&setup, out)?);
    }
    if kind == Kind::Exact {
        return Ok(rates);
    }
    let map = setup.partition(cfg)?;
    if matches!(kind, Kind::MsmSweep | Kind::CompareAll) {
        rates.extend(msm_stage(cfg, &setup, &map, out)?);
    }
    if matches!(kind, Kind::Rts | Kind::CompareAll) {
        log::info!("weighted-ensemble run");
        rates.push(with_dynamics!(&setup.model, d => rts_run(cfg, &setup, d, &map, out)?));
    }
    if matches!(kind, Kind::Milestoning | Kind::CompareAll) {
        log::info!("milestoning run");
        rates.push(with_dynamics!(&setup.model, d => milestoning_run(cfg, &setup, d, &map, out)?));
    }
    if kind != Kind::CompareAll {
        // Single-method runs still report the exact reference next to the estimate.
        rates.insert(
            0,
            MethodRate {
                method: "exact".into(),
                rate: setup.exact()?,
            },
        );
    }
    out.table("comparison", &rates_table(&rates))?;
    Ok(rates)
}
