use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use obo::runner::{self, ExperimentConfig, SweepAxis};
use obo::OboError;

/// Online bilevel optimization experiments.
///
/// Logging is controlled by OBO_LOG_LEVEL (error, warn, info, debug).
#[derive(Debug, Parser)]
#[command(name = "obo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one experiment per value of a parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// eta, k_window, n_inner, alpha or beta.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Run several experiments and print a side-by-side table.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Oracle self-tests and parameter conditions only.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

enum Failure {
    Config(OboError),
    Runtime(String),
}

impl From<OboError> for Failure {
    fn from(e: OboError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    let cfg = ExperimentConfig::from_file(path).map_err(Failure::Config)?;
    cfg.validate().map_err(Failure::Config)?;
    Ok(cfg)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, out, seed } => {
            let mut cfg = load(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let outcome = runner::run_experiment(&cfg)?;
            let s = &outcome.data.summary;
            println!("{}", outcome.artifacts.csv.display());
            println!("{}", outcome.artifacts.summary.display());
            if let Some(err) = &s.error {
                return Err(Failure::Runtime(format!("round {}: {}", err.round, err.message)));
            }
            if let Some(blr) = s.final_blr_cumulative {
                println!("final cumulative BLR {blr:.6e} after {} rounds", s.rounds_completed);
            }
            Ok(())
        }
        Command::Sweep { config, axis, values } => {
            let cfg = load(&config)?;
            let axis: SweepAxis = axis.parse().map_err(Failure::Config)?;
            let outcome = runner::run_sweep(&cfg, axis, &values).map_err(|e| match e {
                OboError::Config(_) => Failure::Config(e),
                other => other.into(),
            })?;
            let rows: Vec<_> = outcome.summary.runs.iter().map(|e| e.run.clone()).collect();
            print!("{}", runner::format_table(&rows));
            println!("{}", outcome.summary_path.display());
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                return Err(Failure::Runtime(format!("{failed} of {} sweep runs failed", rows.len())));
            }
            Ok(())
        }
        Command::Compare { configs, out } => {
            let cfgs = configs.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
            let outcome = runner::compare(&cfgs, &out).map_err(|e| match e {
                OboError::Config(_) => Failure::Config(e),
                other => other.into(),
            })?;
            print!("{}", runner::format_table(&outcome.rows));
            println!("{}", outcome.table_path.display());
            let failed = outcome.rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                return Err(Failure::Runtime(format!("{failed} of {} runs failed", outcome.rows.len())));
            }
            Ok(())
        }
        Command::Check { config } => {
            let cfg = load(&config)?;
            let report = runner::check(&cfg)?;
            for p in &report.probes {
                let status = if p.passed { "ok" } else { "FAIL" };
                match (&p.max_error, &p.error) {
                    (_, Some(e)) => println!("oracle round {:>6} {:<6} {status}  {e}", p.round, p.point),
                    (Some(m), None) => {
                        println!("oracle round {:>6} {:<6} {status}  max rel error {m:.2e}", p.round, p.point)
                    }
                    (None, None) => println!("oracle round {:>6} {:<6} {status}", p.round, p.point),
                }
            }
            for c in &report.validation.conditions {
                let status = if c.passed { "ok" } else { "warn" };
                println!("condition {:<40} {status}  {}", c.name, c.detail);
            }
            if !report.oracles_passed() {
                return Err(Failure::Runtime("oracle self-test failed".into()));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OBO_LOG_LEVEL", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(CONFIG_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("obo: {e}");
            ExitCode::from(CONFIG_ERROR)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("obo: {msg}");
            ExitCode::from(RUNTIME_ERROR)
        }
    }
}
