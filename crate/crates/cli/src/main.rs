mod commands;
mod config;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lagflow::LagflowError;

use commands::Outcome;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "lagflow", version, about = "Mean curvature flow of area-preserving map graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the initial map and write it with a validation report.
    Generate(Common),
    /// Generate the initial map and run the flow.
    Run(Common),
    /// Continue a run from a checkpoint.
    Resume {
        #[command(flatten)]
        common: Common,
        /// Checkpoint snapshot; its `.meta` sidecar must sit next to it.
        #[arg(long)]
        resume: PathBuf,
    },
    /// Post-process the snapshot history of a torus run.
    Diagnose {
        #[command(subcommand)]
        which: Diagnose,
    },
}

#[derive(Subcommand)]
enum Diagnose {
    /// Gaussian density trace, written to density.csv.
    Density(Common),
    /// Parabolically rescaled point set, written to rescaled.txt.
    Rescale(Common),
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl From<LagflowError> for CliError {
    fn from(e: LagflowError) -> Self {
        match e {
            LagflowError::InvalidArgument(_) | LagflowError::Parse { .. } | LagflowError::Io(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("LAGFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("LAGFLOW_THREADS must be a non-negative integer, got '{raw}'")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<Outcome, CliError> {
    configure_threads()?;
    let load = |c: &Common| -> Result<(RunConfig, PathBuf), CliError> {
        let config = RunConfig::load(&c.config)?;
        let out = config.output_dir(c.out.as_deref())?;
        Ok((config, out))
    };
    match cli.command {
        Command::Generate(c) => {
            let (config, out) = load(&c)?;
            commands::cmd_generate(&config, &out)
        }
        Command::Run(c) => {
            let (config, out) = load(&c)?;
            commands::cmd_run(&config, &out)
        }
        Command::Resume { common, resume } => {
            let (config, out) = load(&common)?;
            commands::cmd_resume(&config, &resume, &out)
        }
        Command::Diagnose { which: Diagnose::Density(c) } => {
            let (config, out) = load(&c)?;
            commands::cmd_density(&config, &out)
        }
        Command::Diagnose { which: Diagnose::Rescale(c) } => {
            let (config, out) = load(&c)?;
            commands::cmd_rescale(&config, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::GeometricFailure) => ExitCode::from(1),
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
