use std::path::Path;
use std::process::{Command, Output};

fn ratekit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ratekit"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const BENCH2D_THETA: &str = r#"
[experiment]
kind = "msm_sweep"
name = "tilted"
seed = 3

[dynamics]
model = "metropolis"
potential = "bench2d"
beta = 10.0
dt = 1.0
lo = -1.0
hi = 1.0
dx = 0.1

[basins]
split = 0.0
a = { center = [-1.0, 0.0], radius = 0.4 }
b = { center = [1.0, 0.0], radius = 0.4 }

[partition]
kind = "slanted"
n_cells = 20
theta = 95.0
"#;

#[test]
fn validate_cites_the_theta_rule() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tilted.toml");
    std::fs::write(&path, BENCH2D_THETA).unwrap();
    let o = ratekit(&["validate", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("0 <= theta < 90"), "{err}");
    // The last stderr line is a machine-readable record.
    let record: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(record["error"], "config");
    assert_eq!(record["exit_code"], 2);
}

#[test]
fn validate_rejects_missing_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("noseed.toml");
    std::fs::write(&path, BENCH2D_THETA.replace("seed = 3\n", "").replace("95.0", "10.0")).unwrap();
    let o = ratekit(&["validate", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.seed is required"));
    // A seed on the command line fills the gap.
    let o = ratekit(
        &["validate", "--seed", "9", "--config", path.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.starts_with("ok\n") && out.contains("seed = 9"), "{out}");
}

#[test]
fn unknown_keys_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typos.toml");
    let text = BENCH2D_THETA
        .replace("beta = 10.0", "beta = 10.0\nbetta = 1")
        .replace("n_cells = 20", "ncells = 20");
    std::fs::write(&path, text).unwrap();
    let o = ratekit(&["validate", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("dynamics.betta") && err.contains("partition.ncells"),
        "{err}"
    );
}

#[test]
fn every_bundled_config_validates() {
    let dir = tempfile::tempdir().unwrap();
    let o = ratekit(&["list-configs"], dir.path());
    assert!(o.status.success());
    let listing = String::from_utf8(o.stdout).unwrap();
    for line in listing.lines() {
        let name = line.split_whitespace().next().unwrap();
        let v = ratekit(&["validate", "--config", name], dir.path());
        assert!(v.status.success(), "{name}: {}", stderr(&v));
    }
    assert!(listing.lines().count() >= 10);
}

#[test]
fn exact_run_reproduces_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = ratekit(&["run", "--config", "bench1d_exact", "--out", "first"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("first/exact.csv")).unwrap();
    let fields: Vec<f64> = csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|f| f.parse().unwrap())
        .collect();
    assert!((fields[0] / 1.59e-8 - 1.0).abs() < 0.1, "{csv}");
    assert!((fields[1] / 6.70e-11 - 1.0).abs() < 0.1, "{csv}");

    let o = ratekit(
        &[
            "run",
            "--config",
            "first/manifest.toml",
            "--out",
            "second",
            "--format",
            "both",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        csv,
        std::fs::read_to_string(dir.path().join("second/exact.csv")).unwrap()
    );
    assert!(dir.path().join("second/exact.dat").exists());
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ratekit(&["run", "--config", "no_such_thing"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("neither a readable file nor a bundled configuration"));
}
