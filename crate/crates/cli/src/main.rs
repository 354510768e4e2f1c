use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use itinerant_cli::{analyze, run_all, step1, step2, step3, Analysis, CliError, ExperimentConfig};
use serde::Serialize;

/// Train and analyze itinerant echo-state networks.
#[derive(Parser)]
#[command(name = "itinerant", version)]
struct Cli {
    /// JSON experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Innate training and readout; writes the model.
    Step1,
    /// Embed the periodic sequence with a feedback classifier.
    Step2,
    /// Embed the stochastic transition rule with a feedback classifier.
    Step3,
    /// Run analyses on the saved model.
    Analyze {
        #[arg(long, value_enum, value_delimiter = ',', required = true)]
        which: Vec<Analysis>,
    },
    /// All steps followed by every analysis.
    RunAll,
    /// Print the effective configuration as JSON.
    ShowConfig,
}

fn print<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(itinerant_core::Error::from)?;
    writeln!(std::io::stdout(), "{text}")?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    match cli.command {
        Command::Step1 => print(&step1(&cfg)?.1),
        Command::Step2 => print(&step2(&cfg)?.1),
        Command::Step3 => print(&step3(&cfg)?.1),
        Command::Analyze { which } => print(&analyze(&cfg, &which)?),
        Command::RunAll => print(&run_all(&cfg)?),
        Command::ShowConfig => {
            cfg.validate()?;
            print(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
