use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

mod commands;
mod config;
mod potential;
mod verify;

use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("{module}: {source}")]
    Numerical { module: &'static str, source: h4spec::Error },
}

impl CliError {
    pub fn numerical(module: &'static str) -> impl Fn(h4spec::Error) -> CliError {
        move |source| CliError::Numerical { module, source }
    }
}

#[derive(Parser, Debug)]
#[command(name = "h4spec", version, about = "Threshold classification and dispersive decay for Δ² + V in three dimensions")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify the threshold of a potential; writes report.txt, moments.csv, channels.csv, envelope.csv.
    Classify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Stone-formula evolution and decay fits; writes report.txt and decay.csv.
    Evolve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build a designed potential and classify it; adds design.csv and potential.toml.
    Design {
        #[arg(long)]
        config: PathBuf,
    },
    /// Classify a coupling family c·V; writes sweep.csv and report.txt.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run invariant suites and print one CSV line per check.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: verify::Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write verify.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let (cfg_path, f): (PathBuf, fn(&ExperimentConfig) -> Result<commands::Outcome, CliError>) = match cli.command {
        Command::Classify { config } => (config, commands::classify_cmd),
        Command::Evolve { config } => (config, commands::evolve_cmd),
        Command::Design { config } => (config, commands::design_cmd),
        Command::Sweep { config } => (config, commands::sweep_cmd),
        Command::Verify { suite, seed, out } => {
            let checks = verify::run(suite, seed);
            let csv = verify::to_csv(&checks);
            print!("{csv}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
                std::fs::write(dir.join("verify.csv"), &csv).map_err(|e| CliError::Io(e.to_string()))?;
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            eprintln!("verify: {} checks, {failed} failed", checks.len());
            return Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
    };
    let cfg = ExperimentConfig::load(&cfg_path)?;
    let outcome = f(&cfg)?;
    for file in &outcome.files {
        println!("{}", cfg.output.dir.join(file).display());
    }
    if outcome.ambiguous {
        eprintln!("warning: ambiguous rank decision, see report.txt");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
