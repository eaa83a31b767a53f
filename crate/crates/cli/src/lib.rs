//! Command-line front end: configuration files, experiment runs and result tables.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod runner;

pub use config::{Config, ConfigError};
pub use runner::{run_experiment, MethodRate, Setup};

/// Configurations shipped with the binary, addressable by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("bench1d_compare", include_str!("../configs/bench1d_compare.toml")),
    ("bench1d_exact", include_str!("../configs/bench1d_exact.toml")),
    (
        "bench1d_milestoning",
        include_str!("../configs/bench1d_milestoning.toml"),
    ),
    (
        "bench1d_milestoning_committor",
        include_str!("../configs/bench1d_milestoning_committor.toml"),
    ),
    ("bench1d_msm", include_str!("../configs/bench1d_msm.toml")),
    ("bench1d_rts", include_str!("../configs/bench1d_rts.toml")),
    ("bench2d_exact", include_str!("../configs/bench2d_exact.toml")),
    ("bench2d_rts", include_str!("../configs/bench2d_rts.toml")),
    ("bench2d_theta0", include_str!("../configs/bench2d_theta0.toml")),
    ("bench2d_theta40", include_str!("../configs/bench2d_theta40.toml")),
    ("fig1d_error", include_str!("../configs/fig1d_error.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// First comment line of a bundled configuration.
pub fn describe(text: &str) -> &str {
    text.lines()
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .map_or("", str::trim)
}

/// A path to a TOML file or the name of a bundled configuration.
/// Returns the parsed configuration and the label recorded in manifests.
pub fn resolve(spec: &str) -> Result<(Config, String), ConfigError> {
    let path = std::path::Path::new(spec);
    if path.exists() {
        return Ok((Config::load(path)?, spec.to_string()));
    }
    match bundled(spec) {
        Some(text) => Ok((Config::parse(text)?, format!("bundled:{spec}"))),
        None => Err(ConfigError {
            problems: vec![format!(
                "`{spec}` is neither a readable file nor a bundled configuration (see `ratekit list-configs`)"
            )],
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_validate() {
        for (name, text) in BUNDLED {
            let cfg = Config::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.experiment.name, *name);
            assert!(!describe(text).is_empty(), "{name} lacks a description");
        }
    }
}
