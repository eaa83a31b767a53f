//! Experiment configuration: a TOML file with fixed sections.
//!
//! Unknown keys are collected over the whole file and reported together,
//! then the typed structure is deserialized and cross-checked.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Exact,
    MsmSweep,
    Rts,
    Milestoning,
    CompareAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// Continuous overdamped Langevin integrator (1D).
    Brownian,
    /// The Brownian fine-lattice chain, sampled as a Markov chain.
    BrownianLattice,
    /// Metropolis walk on a grid (1D or 2D).
    Metropolis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    /// Equal intervals (1D).
    Uniform,
    /// Equal stripes at angle `theta` (2D).
    Slanted,
    /// Committor level sets of width `epsilon`.
    Committor,
    /// One cell per fine state.
    Fine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MsmSource {
    #[default]
    Analytic,
    Empirical,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Dat,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn dat(self) -> bool {
        matches!(self, Format::Dat | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub kind: Kind,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub model: Model,
    pub potential: String,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<f64>,
    pub dt: f64,
    pub lo: f64,
    pub hi: f64,
    pub dx: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub move_prob: Option<f64>,
}

/// An interval `lo..hi` on the x axis or a disc `center`, `radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasinsConfig {
    /// The reactant half is `x < split`.
    pub split: f64,
    pub a: RegionConfig,
    pub b: RegionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub kind: PartitionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

fn default_taus() -> Vec<usize> {
    ratekit::msm::DEFAULT_TAUS.to_vec()
}

fn default_budget() -> f64 {
    1e5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsmConfig {
    #[serde(default = "default_taus")]
    pub taus: Vec<usize>,
    #[serde(default)]
    pub source: MsmSource,
    /// Empirical rows: dynamics steps per row, so `n = steps_per_row / tau`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_row: Option<usize>,
    /// Cost `n tau / dt` per row assumed by the predicted statistical error.
    #[serde(default = "default_budget")]
    pub error_budget: f64,
}

fn default_mass() -> Vec<f64> {
    vec![0.5, 0.5]
}

fn default_points() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RtsConfig {
    pub walkers_per_cell: usize,
    pub steps: usize,
    pub burn_in: usize,
    #[serde(default)]
    pub equilibrate_rounds: usize,
    #[serde(default)]
    pub equilibrate_steps: usize,
    #[serde(default = "default_mass")]
    pub initial_mass: Vec<f64>,
    #[serde(default = "default_points")]
    pub series_points: usize,
    /// Write the per-step flux log (large).
    #[serde(default)]
    pub flux_log: bool,
    /// Write a checkpoint of the final ensemble.
    #[serde(default)]
    pub checkpoint: bool,
}

fn default_replicas() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MilestoningConfig {
    pub steps_per_cell: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Cells on either side of the start milestone.
    pub start: [usize; 2],
    /// Cells on either side of the absorbing milestone.
    pub cemetery: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default)]
    pub format: Format,
}

/// Recorded in manifests; ignored when read back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub version: String,
    pub config: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Experiment,
    pub dynamics: DynamicsConfig,
    pub basins: BasinsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msm: Option<MsmConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rts: Option<RtsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub milestoning: Option<MilestoningConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl ConfigError {
    fn one(msg: impl Into<String>) -> Self {
        ConfigError {
            problems: vec![msg.into()],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

const SECTIONS: &[(&str, &[&str])] = &[
    ("experiment", &["kind", "name", "seed"]),
    (
        "dynamics",
        &[
            "model",
            "potential",
            "beta",
            "diffusion",
            "dt",
            "lo",
            "hi",
            "dx",
            "move_prob",
        ],
    ),
    ("basins", &["split", "a", "b"]),
    ("partition", &["kind", "n_cells", "theta", "epsilon"]),
    ("msm", &["taus", "source", "steps_per_row", "error_budget"]),
    (
        "rts",
        &[
            "walkers_per_cell",
            "steps",
            "burn_in",
            "equilibrate_rounds",
            "equilibrate_steps",
            "initial_mass",
            "series_points",
            "flux_log",
            "checkpoint",
        ],
    ),
    (
        "milestoning",
        &["steps_per_cell", "burn_in", "replicas", "start", "cemetery"],
    ),
    ("output", &["dir", "format"]),
    ("provenance", &["version", "config"]),
];

const REGION_KEYS: &[&str] = &["lo", "hi", "center", "radius"];

/// Names of all keys not in the schema.
fn unknown_keys(table: &toml::Table) -> Vec<String> {
    let mut out = Vec::new();
    for (name, value) in table {
        let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == name) else {
            out.push(name.clone());
            continue;
        };
        let Some(section) = value.as_table() else { continue };
        for (k, v) in section {
            if !keys.contains(&k.as_str()) {
                out.push(format!("{name}.{k}"));
            } else if name == "basins" && (k == "a" || k == "b") {
                if let Some(region) = v.as_table() {
                    out.extend(
                        region
                            .keys()
                            .filter(|r| !REGION_KEYS.contains(&r.as_str()))
                            .map(|r| format!("basins.{k}.{r}")),
                    );
                }
            }
        }
    }
    out
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::one(e.to_string()))?;
        let unknown = unknown_keys(&table);
        if !unknown.is_empty() {
            return Err(ConfigError {
                problems: unknown.into_iter().map(|k| format!("unknown key `{k}`")).collect(),
            });
        }
        toml::from_str(text).map_err(|e| ConfigError::one(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::one(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn seed(&self) -> u64 {
        self.experiment.seed.expect("validated configuration has a seed")
    }

    pub fn dims(&self) -> usize {
        match self.dynamics.potential.as_str() {
            "bench2d" => 2,
            _ => 1,
        }
    }

    /// Cross-field checks that need no computation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut p = Vec::new();
        let e = &self.experiment;
        if e.seed.is_none() {
            p.push("experiment.seed is required: runs are reproducible only with an explicit seed".to_string());
        }
        if e.name.is_empty() || e.name.contains(['/', '\\']) {
            p.push(format!(
                "experiment.name `{}` must be a non-empty plain file name",
                e.name
            ));
        }
        self.check_dynamics(&mut p);
        self.check_basins(&mut p);
        let needs_partition = e.kind != Kind::Exact;
        match (&self.partition, needs_partition) {
            (None, true) => p.push(format!("[partition] is required for kind {:?}", e.kind)),
            (Some(part), _) => self.check_partition(part, &mut p),
            _ => {}
        }
        let want = |section: bool, name: &str, kinds: &[Kind], p: &mut Vec<String>| {
            if kinds.contains(&e.kind) && !section {
                p.push(format!("[{name}] is required for kind {:?}", e.kind));
            }
        };
        want(self.rts.is_some(), "rts", &[Kind::Rts, Kind::CompareAll], &mut p);
        want(
            self.milestoning.is_some(),
            "milestoning",
            &[Kind::Milestoning, Kind::CompareAll],
            &mut p,
        );
        if let Some(m) = &self.msm {
            if m.taus.is_empty() || m.taus[0] == 0 || m.taus.windows(2).any(|w| w[0] >= w[1]) {
                p.push("msm.taus must be positive and strictly ascending".into());
            }
            if m.source != MsmSource::Analytic && m.steps_per_row.is_none_or(|s| s == 0) {
                p.push("msm.steps_per_row must be positive for empirical matrices".into());
            }
            if !(m.error_budget >= 1.0) {
                p.push("msm.error_budget must be at least 1".into());
            }
        }
        if let Some(r) = &self.rts {
            if r.walkers_per_cell == 0 || r.steps == 0 {
                p.push("rts.walkers_per_cell and rts.steps must be positive".into());
            }
            if r.burn_in >= r.steps {
                p.push(format!(
                    "rts.burn_in ({}) must be smaller than rts.steps ({})",
                    r.burn_in, r.steps
                ));
            }
            if (r.equilibrate_rounds > 0) != (r.equilibrate_steps > 0) {
                p.push("rts.equilibrate_rounds and rts.equilibrate_steps must both be zero or both positive".into());
            }
            if r.initial_mass.len() != 2 || r.initial_mass.iter().any(|m| !(*m > 0.0)) {
                p.push("rts.initial_mass must hold two positive masses".into());
            }
            if r.series_points == 0 {
                p.push("rts.series_points must be positive".into());
            }
        }
        if let Some(m) = &self.milestoning {
            if m.steps_per_cell == 0 || m.replicas == 0 {
                p.push("milestoning.steps_per_cell and milestoning.replicas must be positive".into());
            }
            if m.start == m.cemetery {
                p.push("milestoning.start and milestoning.cemetery must differ".into());
            }
            if self.dims() != 1 {
                p.push("milestoning passage times are implemented for 1D partitions".into());
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { problems: p })
        }
    }

    fn check_dynamics(&self, p: &mut Vec<String>) {
        let d = &self.dynamics;
        if ratekit::Benchmark::from_name(&d.potential).is_err() {
            p.push(format!(
                "dynamics.potential `{}` is not one of bench1d, bench2d, fig1d, flat",
                d.potential
            ));
        }
        for (name, v) in [("beta", d.beta), ("dt", d.dt), ("dx", d.dx)] {
            if !(v > 0.0 && v.is_finite()) {
                p.push(format!("dynamics.{name} must be positive, got {v}"));
            }
        }
        if !(d.hi > d.lo) {
            p.push(format!("dynamics.lo ({}) must be below dynamics.hi ({})", d.lo, d.hi));
        }
        match d.model {
            Model::Brownian | Model::BrownianLattice => {
                if self.dims() != 1 {
                    p.push("Brownian dynamics is one-dimensional; use model = \"metropolis\" in 2D".into());
                }
                if !d.diffusion.is_some_and(|v| v > 0.0) {
                    p.push("dynamics.diffusion must be positive for Brownian models".into());
                }
                if d.move_prob.is_some() {
                    p.push("dynamics.move_prob applies only to the metropolis model".into());
                }
            }
            Model::Metropolis => {
                if d.diffusion.is_some() {
                    p.push("dynamics.diffusion applies only to Brownian models".into());
                }
                let limit = 1.0 / (2 * self.dims()) as f64;
                if let Some(m) = d.move_prob.filter(|m| !(*m > 0.0 && *m <= limit)) {
                    p.push(format!("dynamics.move_prob {m} must lie in (0, {limit}]"));
                }
            }
        }
    }

    fn check_basins(&self, p: &mut Vec<String>) {
        let dims = self.dims();
        for (name, r) in [("a", &self.basins.a), ("b", &self.basins.b)] {
            match (r.lo, r.hi, r.center, r.radius) {
                (Some(lo), Some(hi), None, None) if dims == 1 => {
                    if !(hi >= lo) {
                        p.push(format!("basins.{name}: lo must not exceed hi"));
                    }
                }
                (None, None, Some(_), Some(radius)) if dims == 2 => {
                    if !(radius > 0.0) {
                        p.push(format!("basins.{name}.radius must be positive"));
                    }
                }
                _ if dims == 1 => p.push(format!("basins.{name} must be an interval {{ lo, hi }} in 1D")),
                _ => p.push(format!("basins.{name} must be a disc {{ center, radius }} in 2D")),
            }
        }
    }

    fn check_partition(&self, part: &PartitionConfig, p: &mut Vec<String>) {
        let dims = self.dims();
        let extra = |key: &str, present: bool, p: &mut Vec<String>| {
            if present {
                p.push(format!("partition.{key} does not apply to kind {:?}", part.kind));
            }
        };
        match part.kind {
            PartitionKind::Uniform => {
                if dims != 1 {
                    p.push("uniform partitions are 1D; use kind = \"slanted\" in 2D".into());
                }
                if part.n_cells.is_none_or(|n| n < 2) {
                    p.push("partition.n_cells must be at least 2".into());
                }
                extra("theta", part.theta.is_some(), p);
                extra("epsilon", part.epsilon.is_some(), p);
            }
            PartitionKind::Slanted => {
                if dims != 2 {
                    p.push("slanted partitions are 2D".into());
                }
                if part.n_cells.is_none_or(|n| n < 2) {
                    p.push("partition.n_cells must be at least 2".into());
                }
                match part.theta {
                    None => p.push("partition.theta is required for slanted partitions".into()),
                    Some(t) if !(0.0..90.0).contains(&t) => p.push(format!(
                        "partition.theta = {t} violates 0 <= theta < 90: at 90 degrees the stripes run along the \
                         reaction coordinate and no cell separates the basins"
                    )),
                    _ => {}
                }
                extra("epsilon", part.epsilon.is_some(), p);
            }
            PartitionKind::Committor => {
                match part.epsilon {
                    Some(e) if e > 0.0 && e <= 1.0 => {}
                    _ => p.push("partition.epsilon must lie in (0, 1] for committor partitions".into()),
                }
                extra("n_cells", part.n_cells.is_some(), p);
                extra("theta", part.theta.is_some(), p);
            }
            PartitionKind::Fine => {
                extra("n_cells", part.n_cells.is_some(), p);
                extra("theta", part.theta.is_some(), p);
                extra("epsilon", part.epsilon.is_some(), p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[experiment]
kind = "msm_sweep"
name = "t"
seed = 3

[dynamics]
model = "metropolis"
potential = "bench2d"
beta = 10.0
dt = 1.0
lo = -1.0
hi = 1.0
dx = 0.05

[basins]
split = 0.0
a = { center = [-1.0, 0.0], radius = 0.4 }
b = { center = [1.0, 0.0], radius = 0.4 }

[partition]
kind = "slanted"
n_cells = 20
theta = 40.0
"#;

    #[test]
    fn valid_config_round_trips() {
        let c = Config::parse(BASE).unwrap();
        c.validate().unwrap();
        assert_eq!(Config::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn theta_at_or_above_ninety_is_rejected() {
        let c = Config::parse(&BASE.replace("theta = 40.0", "theta = 95.0")).unwrap();
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("0 <= theta < 90"), "{err}");
    }

    #[test]
    fn missing_seed_is_rejected() {
        let c = Config::parse(&BASE.replace("seed = 3\n", "")).unwrap();
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("experiment.seed is required"));
    }

    #[test]
    fn all_unknown_keys_are_listed() {
        let text = BASE
            .replace("dx = 0.05", "dx = 0.05\nstep = 2")
            .replace("split = 0.0", "split = 0.0\nc = 1")
            + "\n[extra]\nx = 1\n";
        let err = Config::parse(&text).unwrap_err();
        let s = err.to_string();
        assert!(
            s.contains("`dynamics.step`") && s.contains("`basins.c`") && s.contains("`extra`"),
            "{s}"
        );
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = Config::parse("[experiment]\nkind = \n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn kind_requires_sections() {
        let c = Config::parse(&BASE.replace("msm_sweep", "rts")).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("[rts] is required"));
    }
}
