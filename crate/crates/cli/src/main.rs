use clap::{Parser, Subcommand, ValueEnum};
use ratekit::ErrorCategory;
use ratekit_cli::config::{Config, Format, Provenance};
use ratekit_cli::output::OutDir;
use ratekit_cli::{describe, resolve, run_experiment, ConfigError, BUNDLED};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ratekit",
    version,
    about = "Reaction rates of metastable dynamics by four routes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file, or the name of a bundled configuration.
    #[arg(long, global = true)]
    config: Option<String>,

    /// Master seed; overrides experiment.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory (default: out/<experiment name>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its result tables.
    Run,
    /// Check a configuration and print the resolved version.
    Validate,
    /// Show the bundled configurations.
    ListConfigs,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Dat,
    Both,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Dat => Format::Dat,
            FormatArg::Both => Format::Both,
        }
    }
}

const EXIT_ENVIRONMENT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_DATA: u8 = 4;

/// Print a one-line JSON error record on stderr and pick the exit status.
fn fail(kind: &str, code: u8, message: &str, problems: &[String]) -> ExitCode {
    let record = serde_json::json!({
        "error": kind,
        "exit_code": code,
        "message": message,
        "problems": problems,
    });
    eprintln!("{record}");
    ExitCode::from(code)
}

fn config_failure(e: &ConfigError) -> ExitCode {
    eprintln!("{e}");
    fail("config", EXIT_CONFIG, "invalid configuration", &e.problems)
}

fn rate_failure(e: &ratekit::RateError) -> ExitCode {
    let (kind, code) = match e.category() {
        ErrorCategory::Input => ("config", EXIT_CONFIG),
        ErrorCategory::Numerical => ("numerical", EXIT_NUMERICAL),
        ErrorCategory::InsufficientData => ("insufficient_data", EXIT_DATA),
        ErrorCategory::Environment => ("environment", EXIT_ENVIRONMENT),
    };
    fail(kind, code, &e.to_string(), &[])
}

/// Load the configuration and apply command-line overrides.
fn load(cli: &Cli) -> Result<(Config, String), ConfigError> {
    let Some(spec) = cli.config.as_deref() else {
        return Err(ConfigError {
            problems: vec!["--config PATH|NAME is required".into()],
        });
    };
    let (mut cfg, label) = resolve(spec)?;
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = Some(seed);
    }
    if let Some(f) = cli.format {
        cfg.output.format = f.into();
    }
    cfg.validate()?;
    Ok((cfg, label))
}

fn run(cli: &Cli) -> ExitCode {
    let (cfg, label) = match load(cli) {
        Ok(c) => c,
        Err(e) => return config_failure(&e),
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            return config_failure(&ConfigError {
                problems: vec!["--workers must be positive".into()],
            });
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail("environment", EXIT_ENVIRONMENT, &e.to_string(), &[]);
        }
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.experiment.name));
    let mut out = match OutDir::create(&dir, cfg.output.format) {
        Ok(o) => o,
        Err(e) => return rate_failure(&e),
    };
    // The manifest reruns the same experiment wherever its outputs are written.
    let mut manifest = cfg.clone();
    manifest.output.dir = None;
    manifest.provenance = Some(Provenance {
        version: env!("CARGO_PKG_VERSION").into(),
        config: label,
    });
    if let Err(e) = out.raw("manifest.toml", |w| {
        Ok(std::io::Write::write_all(w, manifest.to_toml().as_bytes())?)
    }) {
        return rate_failure(&e);
    }
    let started = std::time::Instant::now();
    match run_experiment(&cfg, &mut out) {
        Ok(rates) => {
            for r in rates {
                println!(
                    "{:<24} forward {:e}  backward {:e}",
                    r.method, r.rate.forward, r.rate.backward
                );
            }
            log::info!("finished in {:.1?}", started.elapsed());
            for p in out.written() {
                log::info!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => rate_failure(&e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run => run(&cli),
        Command::Validate => match load(&cli) {
            Ok((cfg, _)) => {
                println!("ok");
                print!("{}", cfg.to_toml());
                ExitCode::SUCCESS
            }
            Err(e) => config_failure(&e),
        },
        Command::ListConfigs => {
            for (name, text) in BUNDLED {
                println!("{name:<32} {}", describe(text));
            }
            ExitCode::SUCCESS
        }
    }
}
